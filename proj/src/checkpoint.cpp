#include "nfer/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nfer/errors.hpp"

namespace nfer {

namespace {

constexpr char kMagic[8] = {'N', 'F', 'E', 'R', 'C', 'K', 'P', 'T'};
constexpr std::size_t kDigestBytes = 32;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& b, std::size_t end) : b_(b), end_(end) {}
  void raw(void* p, std::size_t n) {
    if (n > end_ - pos_) throw ParseError("checkpoint: truncated");
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > end_ - pos_) throw ParseError("checkpoint: truncated string");
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::array<unsigned char, kDigestBytes> sha256(const char* data, std::size_t n) {
  std::array<unsigned char, kDigestBytes> out{};
  unsigned int len = 0;
  if (EVP_Digest(data, n, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != kDigestBytes) throw IoError("SHA-256 computation failed");
  return out;
}

std::string hex(const unsigned char* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(digits[p[i] >> 4]);
    s.push_back(digits[p[i] & 15]);
  }
  return s;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  const auto d = sha256(bytes.data(), bytes.size());
  return hex(d.data(), d.size());
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(to_json(ck.config).dump());
  w.str(format_incidence(ck.model.hypergraph));
  w.u64(ck.epochs_done);
  w.u64(ck.optimizer.step);
  const auto refs = ck.model.params.refs();
  const bool moments = ck.optimizer.initialized();
  if (moments && ck.optimizer.m.size() != refs.size()) throw std::invalid_argument("checkpoint: optimizer state does not match parameters");
  w.u64(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Mat& p = *refs[i].value;
    w.str(refs[i].name);
    w.u64(p.rows());
    w.u64(p.cols());
    for (double x : p.flat()) w.f64(x);
    for (std::size_t k = 0; k < p.size(); ++k) w.f64(moments ? ck.optimizer.m[i].flat()[k] : 0.0);
    for (std::size_t k = 0; k < p.size(); ++k) w.f64(moments ? ck.optimizer.v[i].flat()[k] : 0.0);
  }
  const auto d = sha256(w.buffer().data(), w.buffer().size());
  w.raw(d.data(), d.size());
  return std::move(w.buffer());
}

std::string checkpoint_digest(const std::string& bytes) {
  if (bytes.size() < kDigestBytes) throw ParseError("checkpoint: too short");
  return hex(reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size() - kDigestBytes, kDigestBytes);
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + kDigestBytes) throw ParseError("checkpoint: too short");
  const std::size_t body = bytes.size() - kDigestBytes;
  const auto d = sha256(bytes.data(), body);
  if (std::memcmp(d.data(), bytes.data() + body, kDigestBytes) != 0) throw ParseError("checkpoint: digest mismatch (file corrupt or modified)");

  Reader r(bytes, body);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ParseError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ck;
  try {
    ck.config = train_config_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad config: ") + e.what());
  }
  Hypergraph g = load_incidence(r.str());
  ck.epochs_done = r.u64();
  ck.optimizer.step = r.u64();
  ck.model = Model::create(ck.config.model, std::move(g), 0);

  auto refs = ck.model.params.refs();
  const auto n = r.u64();
  if (n != refs.size()) throw ParseError("checkpoint: holds " + std::to_string(n) + " tensors, model has " + std::to_string(refs.size()));
  for (auto& ref : refs) {
    const auto name = r.str();
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (name != ref.name) throw ParseError("checkpoint: expected tensor " + ref.name + ", found " + name);
    if (rows != ref.value->rows() || cols != ref.value->cols()) throw ParseError("checkpoint: shape mismatch for " + name);
    Mat m(rows, cols), v(rows, cols);
    for (double& x : ref.value->flat()) x = r.f64();
    for (double& x : m.flat()) x = r.f64();
    for (double& x : v.flat()) x = r.f64();
    ck.optimizer.m.push_back(std::move(m));
    ck.optimizer.v.push_back(std::move(v));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing data");
  if (ck.optimizer.step == 0) {
    ck.optimizer.m.clear();
    ck.optimizer.v.clear();
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace nfer
