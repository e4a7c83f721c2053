#pragma once
// Binary checkpoint container (little-endian):
//
//   "NFERCKPT" | u32 version
//   str config JSON | str hypergraph (list form)
//   u64 epochs_done | u64 optimizer step
//   u64 n | n x { str name | u64 rows | u64 cols | f64 values | f64 m | f64 v }
//   32-byte SHA-256 of every preceding byte
//
// str = u64 length + bytes. Moments are zero-filled when the optimizer has
// not stepped yet.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "nfer/config.hpp"
#include "nfer/model.hpp"
#include "nfer/optim.hpp"

namespace nfer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  Model model;
  AdamWState optimizer;
  std::uint64_t epochs_done = 0;
};

std::string serialize_checkpoint(const Checkpoint& ck);
/// Throws ParseError on a bad magic, version, layout or digest.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);
/// Digest stored in the trailer of a serialized checkpoint.
std::string checkpoint_digest(const std::string& bytes);

}  // namespace nfer
