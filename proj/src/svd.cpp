#include "melon/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "melon/error.hpp"

namespace melon {

int Spectrum::numerical_rank(double tol) const {
  if (sigma.empty() || sigma[0] <= 0.0) return 0;
  int r = 0;
  for (double s : sigma) {
    if (s / sigma[0] > tol) ++r;
  }
  return r;
}

Tensor SvdResult::reconstruct() const {
  const std::size_t m = u.rows(), n = v.rows(), r = spectrum.sigma.size();
  Tensor out({m, n});
  for (std::size_t k = 0; k < r; ++k) {
    const double s = spectrum.sigma[k];
    if (s == 0.0) continue;
    for (std::size_t i = 0; i < m; ++i) {
      const double uis = u.at(i, k) * s;
      if (uis == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += uis * v.at(j, k);
    }
  }
  return out;
}

namespace {

// One-sided Jacobi on the columns of a (m x n, m >= n): orthogonalize column
// pairs until every off-diagonal inner product is negligible.
SvdResult jacobi_tall(Tensor a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

  const int max_sweeps = 60;
  const double tol = 1e-15;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = a.at(i, p), xq = a.at(i, q);
          app += xp * xp;
          aqq += xq * xq;
          apq += xp * xq;
        }
        const double denom = std::sqrt(app * aqq);
        if (denom == 0.0 || std::abs(apq) <= tol * denom) continue;
        worst = std::max(worst, std::abs(apq) / denom);

        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = a.at(i, p), xq = a.at(i, q);
          a.at(i, p) = c * xp - s * xq;
          a.at(i, q) = s * xp + c * xq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v.at(i, p), vq = v.at(i, q);
          v.at(i, p) = c * vp - s * vq;
          v.at(i, q) = s * vp + c * vq;
        }
      }
    }
    if (worst < tol) break;
  }

  std::vector<double> sigma(n);
  Tensor u({m, n});
  for (std::size_t j = 0; j < n; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) norm += a.at(i, j) * a.at(i, j);
    norm = std::sqrt(norm);
    sigma[j] = norm;
    if (norm > 0.0) {
      for (std::size_t i = 0; i < m; ++i) u.at(i, j) = a.at(i, j) / norm;
    }
  }

  // sort descending
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });
  SvdResult out;
  out.u = Tensor({m, n});
  out.v = Tensor({n, n});
  out.spectrum.sigma.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.spectrum.sigma[k] = sigma[order[k]];
    for (std::size_t i = 0; i < m; ++i) out.u.at(i, k) = u.at(i, order[k]);
    for (std::size_t i = 0; i < n; ++i) out.v.at(i, k) = v.at(i, order[k]);
  }
  return out;
}

}  // namespace

SvdResult svd(const Tensor& a) {
  if (a.ndim() != 2 || a.numel() == 0) {
    throw NumericError("svd: need a non-empty 2-D matrix, got " + shape_str(a.shape()));
  }
  a.require_finite("svd input");
  if (a.rows() >= a.cols()) return jacobi_tall(a);

  // Work on the transpose, then swap the factors.
  Tensor at({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) at.at(j, i) = a.at(i, j);
  }
  SvdResult r = jacobi_tall(std::move(at));
  std::swap(r.u, r.v);
  return r;
}

double spectral_norm(const Tensor& a) { return svd(a).spectrum.sigma.at(0); }

Tensor truncate_rank(const SvdResult& s, int k) {
  const std::size_t m = s.u.rows(), n = s.v.rows();
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), s.spectrum.sigma.size());
  Tensor out({m, n});
  for (std::size_t r = 0; r < kk; ++r) {
    const double sv = s.spectrum.sigma[r];
    for (std::size_t i = 0; i < m; ++i) {
      const double uis = s.u.at(i, r) * sv;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += uis * s.v.at(j, r);
    }
  }
  return out;
}

double best_rank_k_error(const Tensor& a, int k) {
  const SvdResult s = svd(a);
  const int rank = s.spectrum.numerical_rank(1e-12);
  if (k < 1 || k >= rank) {
    throw NumericError("best_rank_k_error: k=" + std::to_string(k) +
                       " out of range for rank " + std::to_string(rank));
  }
  return s.spectrum.sigma.at(static_cast<std::size_t>(k));
}

}  // namespace melon
