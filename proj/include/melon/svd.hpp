#pragma once

#include <vector>

#include "melon/tensor.hpp"

namespace melon {

struct Spectrum {
  std::vector<double> sigma;  // non-increasing, non-negative

  // count of sigma_r / sigma_1 > tol
  int numerical_rank(double tol = 1e-10) const;
};

struct SvdResult {
  Tensor u;  // m x r
  Tensor v;  // n x r
  Spectrum spectrum;

  Tensor reconstruct() const;  // U diag(sigma) V^T
};

// One-sided Jacobi SVD; ample at desk sizes and accurate to ~1e-14 * sigma_1.
SvdResult svd(const Tensor& a);

double spectral_norm(const Tensor& a);  // sigma_1

// ||A - A_k||_2 where A_k is the truncated SVD; equals sigma_{k+1}.
double best_rank_k_error(const Tensor& a, int k);

// The truncated matrix itself (rank-k approximation).
Tensor truncate_rank(const SvdResult& s, int k);

}  // namespace melon
