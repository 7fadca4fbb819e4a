#pragma once

#include <cstdint>
#include <random>

#include "milab/autodiff.hpp"

namespace milab::testing {

inline ad::Matrix uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace milab::testing
