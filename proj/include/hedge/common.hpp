#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hedge {

// Tensor shapes disagree (matmul inner dims, broadcast, concat rows, ...).
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration value: unknown preset, dropout >= 1, odd model dim, ...
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A call-site contract was violated: non-scalar loss, empty input list,
// misaligned sidecar, non-prefix mask.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File could not be read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (XML, vector file, manifest); message carries the
// position when one is known.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Softmax or pooling over a mask with no live position.
struct InvalidMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loss went NaN mid-training; message names the first bad parameter.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-timestep validity mask. True positions must form a prefix when a layer
// says so; helpers below check that.
using Mask = std::vector<std::uint8_t>;

inline std::size_t mask_count(const Mask& m) {
  std::size_t n = 0;
  for (auto b : m) n += (b != 0);
  return n;
}

inline bool is_prefix_mask(const Mask& m) {
  bool seen_false = false;
  for (auto b : m) {
    if (!b) seen_false = true;
    else if (seen_false) return false;
  }
  return true;
}

inline Mask full_mask(std::size_t n) { return Mask(n, 1); }

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// FNV-1a, used for vocab/tagset fingerprints in checkpoints.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_strings(const std::vector<std::string>& v) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& s : v) {
    h = fnv1a64(s.data(), s.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return h;
}

}  // namespace hedge
