#pragma once

#include <cstdint>
#include <random>

#include "bwrec/types.hpp"

namespace bwrec {

// Seeded RNG stream. Every randomized routine takes an explicit seed or an
// Rng; nothing reads global state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  // Fills row by row; the fill order is part of the determinism contract.
  Mat gaussian_matrix(Index rows, Index cols) {
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        m(i, j) = normal_(engine_);
      }
    }
    return m;
  }

  Vec gaussian_vector(Index n) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) {
      v(i) = normal_(engine_);
    }
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Derives an independent stream seed from a base seed and a stream tag.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace bwrec
