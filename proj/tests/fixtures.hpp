#pragma once

#include "spectral_hmm/hmm.hpp"

namespace fixtures {

using spectral_hmm::HmmParams;
using spectral_hmm::Matrix;
using spectral_hmm::Vector;

/// One hidden state emitting symbol 1 with probability 0.3 and symbol 2 with 0.7.
inline HmmParams one_state() {
  HmmParams p{Matrix::Ones(1, 1), Matrix(2, 1), Vector::Ones(1)};
  p.O << 0.3, 0.7;
  return p;
}

/// T = I, O(x, j) = [x == j], pi = e_1: always emits symbol 1.
inline HmmParams deterministic(std::size_t m, std::size_t n) {
  const auto mi = static_cast<Eigen::Index>(m), ni = static_cast<Eigen::Index>(n);
  HmmParams p{Matrix::Identity(mi, mi), Matrix::Zero(ni, mi), Vector::Zero(mi)};
  for (Eigen::Index j = 0; j < mi; ++j) p.O(j, j) = 1.0;
  p.pi(0) = 1.0;
  return p;
}

/// Well-conditioned 3-state, 5-symbol HMM with every [A_x]_{ij} >= 0.015.
inline HmmParams condition3() {
  HmmParams p{Matrix(3, 3), Matrix(5, 3), Vector(3)};
  p.T << 0.70, 0.15, 0.15,
         0.15, 0.70, 0.15,
         0.15, 0.15, 0.70;
  p.O << 0.5, 0.1, 0.1,
         0.2, 0.5, 0.1,
         0.1, 0.2, 0.5,
         0.1, 0.1, 0.2,
         0.1, 0.1, 0.1;
  p.pi << 0.40, 0.35, 0.25;
  return p;
}

}  // namespace fixtures
