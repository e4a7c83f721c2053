#include "nfer/hypergraph.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "nfer/errors.hpp"

namespace nfer {

namespace {

constexpr std::string_view kDefaultHypergraph = R"(# Prototypical AU activations for the six basic expressions.
# One line per action unit, listing the expressions it is consistently active in.
edges: happiness sadness surprise fear anger disgust
AU1: sadness surprise fear
AU2: surprise fear
AU4: sadness fear anger
AU5: surprise fear anger
AU6: happiness
AU7: fear anger
AU9: disgust
AU12: happiness
AU15: sadness disgust
AU16: disgust
AU20: fear
AU23: anger
AU26: surprise fear
)";

// ASCII-only helpers; the loader must not depend on the C locale.
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == ',' || c == '\f' || c == '\v'; }

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = lower(c);
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_blank(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_blank(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_blank(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_blank(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

struct Line {
  std::size_t number;
  std::string key;
  std::vector<std::string> values;
};

}  // namespace

Hypergraph Hypergraph::from_incidence(Mat incidence, std::vector<std::string> vertex_names, std::vector<std::string> edge_names) {
  if (vertex_names.size() != incidence.rows() || edge_names.size() != incidence.cols()) {
    throw ValidationError("hypergraph: name counts do not match incidence shape " + incidence.shape_str());
  }
  if (incidence.rows() == 0 || incidence.cols() == 0) throw ValidationError("hypergraph: no vertices or no hyperedges");
  std::set<std::string> seen;
  for (const auto& n : vertex_names)
    if (!seen.insert(n).second) throw ValidationError("hypergraph: duplicate vertex '" + n + "'");
  seen.clear();
  for (const auto& n : edge_names)
    if (!seen.insert(to_lower(n)).second) throw ValidationError("hypergraph: duplicate hyperedge '" + n + "'");
  for (std::size_t v = 0; v < incidence.rows(); ++v)
    for (std::size_t e = 0; e < incidence.cols(); ++e) {
      const double x = incidence(v, e);
      if (x != 0.0 && x != 1.0) {
        throw ParseError("hypergraph: non-binary incidence entry at (" + vertex_names[v] + ", " + edge_names[e] + ")");
      }
    }
  Hypergraph g{std::move(incidence), std::move(vertex_names), std::move(edge_names)};
  const auto deg = degrees(g);
  for (std::size_t v = 0; v < g.vertices(); ++v)
    if (deg.vertex[v] == 0) throw ValidationError("hypergraph: vertex '" + g.vertex_names[v] + "' belongs to no hyperedge");
  for (std::size_t e = 0; e < g.edges(); ++e)
    if (deg.edge[e] == 0) throw ValidationError("hypergraph: hyperedge '" + g.edge_names[e] + "' is empty");
  return g;
}

Hypergraph load_incidence(std::string_view doc) {
  if (doc.size() >= 3 && doc.substr(0, 3) == "\xEF\xBB\xBF") doc.remove_prefix(3);

  std::vector<Line> lines;
  std::size_t number = 0;
  while (!doc.empty()) {
    ++number;
    const auto nl = doc.find('\n');
    std::string_view raw = doc.substr(0, nl);
    doc = nl == std::string_view::npos ? std::string_view{} : doc.substr(nl + 1);
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto colon = raw.find(':');
    if (colon == std::string_view::npos) throw ParseError("hypergraph line " + std::to_string(number) + ": expected 'name: entries'");
    const auto key = trim(raw.substr(0, colon));
    if (key.empty()) throw ParseError("hypergraph line " + std::to_string(number) + ": missing name before ':'");
    lines.push_back(Line{number, std::string(key), tokens(raw.substr(colon + 1))});
  }

  bool matrix_form = false;
  std::optional<std::vector<std::string>> edges;
  std::vector<const Line*> rows;
  for (const auto& l : lines) {
    const auto k = to_lower(l.key);
    if (k == "format") {
      if (l.values.size() != 1) throw ParseError("hypergraph line " + std::to_string(l.number) + ": format takes one value");
      const auto f = to_lower(l.values[0]);
      if (f == "matrix") {
        matrix_form = true;
      } else if (f != "list") {
        throw ParseError("hypergraph line " + std::to_string(l.number) + ": unknown format '" + l.values[0] + "'");
      }
    } else if (k == "edges") {
      if (edges) throw ParseError("hypergraph line " + std::to_string(l.number) + ": edges declared twice");
      edges = l.values;
    } else {
      rows.push_back(&l);
    }
  }
  if (matrix_form && !edges) throw ParseError("hypergraph: matrix form requires an 'edges:' line");

  std::vector<std::string> edge_names = edges.value_or(std::vector<std::string>{});
  auto edge_index = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto ln = to_lower(name);
    for (std::size_t i = 0; i < edge_names.size(); ++i)
      if (to_lower(edge_names[i]) == ln) return i;
    return std::nullopt;
  };
  if (!edges) {
    for (const Line* l : rows)
      for (const auto& v : l->values)
        if (!edge_index(v)) edge_names.push_back(v);
  }

  std::vector<std::string> vertex_names;
  Mat h(rows.size(), edge_names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Line& l = *rows[r];
    vertex_names.push_back(l.key);
    if (matrix_form) {
      if (l.values.size() != edge_names.size()) {
        throw ParseError("hypergraph line " + std::to_string(l.number) + ": expected " + std::to_string(edge_names.size()) +
                         " entries, found " + std::to_string(l.values.size()));
      }
      for (std::size_t e = 0; e < l.values.size(); ++e) {
        if (l.values[e] == "1") {
          h(r, e) = 1.0;
        } else if (l.values[e] != "0") {
          throw ParseError("hypergraph line " + std::to_string(l.number) + ": non-binary entry '" + l.values[e] + "'");
        }
      }
    } else {
      for (const auto& name : l.values) {
        const auto e = edge_index(name);
        if (!e) throw ParseError("hypergraph line " + std::to_string(l.number) + ": unknown hyperedge '" + name + "'");
        if (h(r, *e) != 0.0) throw ParseError("hypergraph line " + std::to_string(l.number) + ": hyperedge '" + name + "' listed twice");
        h(r, *e) = 1.0;
      }
    }
  }
  return Hypergraph::from_incidence(std::move(h), std::move(vertex_names), std::move(edge_names));
}

Hypergraph load_incidence_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open hypergraph file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_incidence(ss.str());
}

std::string format_incidence(const Hypergraph& g) {
  std::string out = "edges:";
  for (const auto& e : g.edge_names) out += " " + e;
  out += "\n";
  for (std::size_t v = 0; v < g.vertices(); ++v) {
    out += g.vertex_names[v] + ":";
    for (std::size_t e = 0; e < g.edges(); ++e)
      if (g.incidence(v, e) != 0.0) out += " " + g.edge_names[e];
    out += "\n";
  }
  return out;
}

std::string_view default_knowledge_hypergraph_text() { return kDefaultHypergraph; }

Hypergraph default_knowledge_hypergraph() { return load_incidence(kDefaultHypergraph); }

DegreePair degrees(const Hypergraph& g) {
  DegreePair d{std::vector<double>(g.vertices(), 0.0), std::vector<double>(g.edges(), 0.0)};
  for (std::size_t v = 0; v < g.vertices(); ++v)
    for (std::size_t e = 0; e < g.edges(); ++e) {
      d.vertex[v] += g.incidence(v, e);
      d.edge[e] += g.incidence(v, e);
    }
  return d;
}

Mat propagation_matrix(const Hypergraph& g) {
  const auto deg = degrees(g);
  const std::size_t n = g.vertices();
  Mat p(n, n);
  // P[i][j] = sum_e H[i][e] H[j][e] / De[e] / sqrt(Dv[i] Dv[j]); filled
  // symmetrically so P == P^T bit-for-bit.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t e = 0; e < g.edges(); ++e) s += g.incidence(i, e) * g.incidence(j, e) / deg.edge[e];
      s /= std::sqrt(deg.vertex[i] * deg.vertex[j]);
      p(i, j) = s;
      p(j, i) = s;
    }
  }
  return p;
}

Mat hgnn_conv(const Mat& features, const Mat& propagation, const Mat& theta, bool final_layer) {
  if (propagation.rows() != features.rows() || propagation.cols() != features.rows()) {
    throw std::invalid_argument("hgnn_conv: features " + features.shape_str() + " do not match propagation " + propagation.shape_str());
  }
  if (features.cols() != theta.rows()) throw std::invalid_argument("hgnn_conv: features " + features.shape_str() + " vs theta " + theta.shape_str());
  Mat out = matmul(propagation, matmul(features, theta));
  if (!final_layer)
    for (double& x : out.flat()) x = x > 0 ? x : 0.0;
  return out;
}

Mat hgnn_conv(const Mat& features, const Hypergraph& g, const Mat& theta, bool final_layer) {
  return hgnn_conv(features, propagation_matrix(g), theta, final_layer);
}

}  // namespace nfer
