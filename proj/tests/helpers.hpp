#pragma once

#include <cstdint>
#include <random>

#include "unmatched/linear_map.hpp"

namespace testing_helpers {

using unmatched::Index;
using unmatched::Matrix;
using unmatched::Vector;

inline Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 17);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline Vector gaussian_vector(Index n, std::uint64_t seed) { return gaussian(n, 1, seed).col(0); }

// Exact rank r (generically).
inline Matrix low_rank(Index rows, Index cols, Index r, std::uint64_t seed) {
  return gaussian(rows, r, seed) * gaussian(r, cols, seed + 1000);
}

inline double rel(const Vector& x, const Vector& ref) { return (x - ref).norm() / ref.norm(); }

}  // namespace testing_helpers
