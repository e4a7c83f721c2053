#include "nfer/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nfer/errors.hpp"

namespace nfer {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParseError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items())
    if (!ok.count(k)) throw ParseError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError("config: bad value for '" + (where.empty() ? std::string(key) : where + "." + key) + "': " + e.what());
  }
}

std::string modality_key(const std::optional<Modality>& m) { return m ? modality_name(*m) : "all"; }

}  // namespace

const char* split_mode_name(SplitMode m) {
  switch (m) {
    case SplitMode::KFold: return "kfold";
    case SplitMode::Holdout: return "holdout";
    case SplitMode::None: return "none";
  }
  return "?";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  model.validate();
  generator.validate();
  if (data_source != "synthetic" && data_source != "directory") fail("data.source must be 'synthetic' or 'directory'");
  if (data_source == "directory" && data_directory.empty()) fail("data.directory is required for a directory source");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("train.lambda must be finite and non-negative");
  if (batch_size == 0) fail("train.batch_size must be at least 1");
  if (epochs == 0) fail("train.epochs must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("train.lr must be positive");
  if (!(adamw.weight_decay >= 0.0)) fail("train.weight_decay must be non-negative");
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0) || !(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) fail("train.beta1/beta2 must lie in [0, 1)");
  if (!(adamw.eps > 0.0)) fail("train.eps must be positive");
  if (!(schedule.warmup_fraction >= 0.0 && schedule.warmup_fraction < 1.0)) fail("train.warmup_fraction must lie in [0, 1)");
  if (!(schedule.div_factor >= 1.0) || !(schedule.final_div_factor >= 1.0)) fail("train.div_factor and final_div_factor must be >= 1");
  if (threads == 0) fail("train.threads must be at least 1");
  if (split == SplitMode::KFold) {
    if (folds < 2) fail("split.folds must be at least 2");
    if (fold >= folds) fail("split.fold must be below split.folds");
  }
  if (data_source == "synthetic" && generator.channels != model.channels) fail("data.generator.channels must equal model.channels");
}

json to_json(const TrainConfig& c) {
  const auto& g = c.generator;
  return json{
      {"model",
       {{"channels", c.model.channels},
        {"image_size", c.model.image_size},
        {"patch", c.model.patch},
        {"dim", c.model.dim},
        {"depth", c.model.depth},
        {"ffn_ratio", c.model.ffn_ratio},
        {"reflections", c.model.reflections},
        {"hgnn_dims", c.model.hgnn_dims}}},
      {"hypergraph", c.hypergraph},
      {"data",
       {{"source", c.data_source},
        {"directory", c.data_directory},
        {"generator",
         {{"image_size", g.image_size},
          {"channels", g.channels},
          {"classes", g.classes},
          {"au_patterns", g.au_patterns},
          {"subjects", g.subjects},
          {"samples_per_cell", g.samples_per_cell},
          {"noise", g.noise},
          {"au_strength", g.au_strength},
          {"modality_strength", g.modality_strength},
          {"subject_strength", g.subject_strength},
          {"confound", g.confound},
          {"holdout_subjects", g.holdout_subjects},
          {"seed", g.seed}}}}},
      {"train",
       {{"lambda", c.lambda},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"lr", c.lr},
        {"weight_decay", c.adamw.weight_decay},
        {"warmup_fraction", c.schedule.warmup_fraction},
        {"div_factor", c.schedule.div_factor},
        {"final_div_factor", c.schedule.final_div_factor},
        {"beta1", c.adamw.beta1},
        {"beta2", c.adamw.beta2},
        {"eps", c.adamw.eps},
        {"seed", c.seed},
        {"threads", c.threads}}},
      {"split", {{"mode", split_mode_name(c.split)}, {"folds", c.folds}, {"fold", c.fold}, {"seed", c.split_seed}}},
      {"eval", {{"modality", modality_key(c.eval_modality)}}},
  };
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  check_keys(j, "", {"model", "hypergraph", "data", "train", "split", "eval"});
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"channels", "image_size", "patch", "dim", "depth", "ffn_ratio", "reflections", "hgnn_dims"});
    read(m, "channels", "model", c.model.channels);
    read(m, "image_size", "model", c.model.image_size);
    read(m, "patch", "model", c.model.patch);
    read(m, "dim", "model", c.model.dim);
    read(m, "depth", "model", c.model.depth);
    read(m, "ffn_ratio", "model", c.model.ffn_ratio);
    read(m, "reflections", "model", c.model.reflections);
    read(m, "hgnn_dims", "model", c.model.hgnn_dims);
  }
  read(j, "hypergraph", "", c.hypergraph);
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"source", "directory", "generator"});
    read(d, "source", "data", c.data_source);
    read(d, "directory", "data", c.data_directory);
    if (d.contains("generator")) {
      const auto& g = d["generator"];
      const std::string w = "data.generator";
      check_keys(g, w, {"image_size", "channels", "classes", "au_patterns", "subjects", "samples_per_cell", "noise", "au_strength",
                        "modality_strength", "subject_strength", "confound", "holdout_subjects", "seed"});
      auto& gc = c.generator;
      read(g, "image_size", w, gc.image_size);
      read(g, "channels", w, gc.channels);
      read(g, "classes", w, gc.classes);
      read(g, "au_patterns", w, gc.au_patterns);
      read(g, "subjects", w, gc.subjects);
      read(g, "samples_per_cell", w, gc.samples_per_cell);
      read(g, "noise", w, gc.noise);
      read(g, "au_strength", w, gc.au_strength);
      read(g, "modality_strength", w, gc.modality_strength);
      read(g, "subject_strength", w, gc.subject_strength);
      read(g, "confound", w, gc.confound);
      read(g, "holdout_subjects", w, gc.holdout_subjects);
      read(g, "seed", w, gc.seed);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train", {"lambda", "batch_size", "epochs", "lr", "weight_decay", "warmup_fraction", "div_factor", "final_div_factor", "beta1",
                            "beta2", "eps", "seed", "threads"});
    read(t, "lambda", "train", c.lambda);
    read(t, "batch_size", "train", c.batch_size);
    read(t, "epochs", "train", c.epochs);
    read(t, "lr", "train", c.lr);
    read(t, "weight_decay", "train", c.adamw.weight_decay);
    read(t, "warmup_fraction", "train", c.schedule.warmup_fraction);
    read(t, "div_factor", "train", c.schedule.div_factor);
    read(t, "final_div_factor", "train", c.schedule.final_div_factor);
    read(t, "beta1", "train", c.adamw.beta1);
    read(t, "beta2", "train", c.adamw.beta2);
    read(t, "eps", "train", c.adamw.eps);
    read(t, "seed", "train", c.seed);
    read(t, "threads", "train", c.threads);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    check_keys(s, "split", {"mode", "folds", "fold", "seed"});
    std::string mode = split_mode_name(c.split);
    read(s, "mode", "split", mode);
    if (mode == "kfold") {
      c.split = SplitMode::KFold;
    } else if (mode == "holdout") {
      c.split = SplitMode::Holdout;
    } else if (mode == "none") {
      c.split = SplitMode::None;
    } else {
      throw ParseError("config: split.mode must be kfold, holdout or none");
    }
    read(s, "folds", "split", c.folds);
    read(s, "fold", "split", c.fold);
    read(s, "seed", "split", c.split_seed);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, "eval", {"modality"});
    std::string m = modality_key(c.eval_modality);
    read(e, "modality", "eval", m);
    if (m == "all" || m == "ALL") {
      c.eval_modality = std::nullopt;
    } else {
      try {
        c.eval_modality = parse_modality(m);
      } catch (const std::invalid_argument&) {
        throw ParseError("config: eval.modality must be NIR, VIS or all");
      }
    }
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  auto c = train_config_from_json(j);
  const auto base = path.parent_path();
  auto rebase = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  rebase(c.hypergraph);
  rebase(c.data_directory);
  return c;
}

TrainConfig override_config(const TrainConfig& cfg, const json& patch) {
  json j = to_json(cfg);
  j.merge_patch(patch);
  return train_config_from_json(j);
}

json dotted_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) {
    if (p.empty()) throw std::invalid_argument("override '" + assignment + "' has an empty key segment");
    parts.push_back(p);
  }
  json out = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) out = json{{*it, out}};
  return out;
}

Hypergraph resolve_hypergraph(const TrainConfig& cfg) {
  return cfg.hypergraph.empty() ? default_knowledge_hypergraph() : load_incidence_file(cfg.hypergraph);
}

Dataset resolve_dataset(const TrainConfig& cfg, const Hypergraph& g) {
  if (cfg.data_source == "directory") return load_image_dir(cfg.data_directory, g.edge_names, cfg.model.channels);
  GeneratorConfig gen = cfg.generator;
  if (gen.channels != cfg.model.channels) throw std::invalid_argument("config: generator channels differ from model channels");
  return generate_synthetic(gen, g);
}

}  // namespace nfer
