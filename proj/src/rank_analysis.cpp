#include "melon/rank_analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "melon/error.hpp"
#include "melon/rng.hpp"

namespace melon {

using nlohmann::json;

namespace {

// Gram-Schmidt a random vector against the accepted columns, normalize.
std::vector<double> orthonormal_column(std::size_t n, const std::vector<std::vector<double>>& prev,
                                       Rng& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    for (const auto& p : prev) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += v[i] * p[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot * p[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-8) {
      for (auto& x : v) x /= norm;
      return v;
    }
  }
  throw NumericError("plant: failed to draw an orthonormal direction");
}

}  // namespace

PlantedMatrix plant_low_rank(std::size_t n, std::size_t m, int rank, std::uint64_t seed) {
  if (rank < 1 || static_cast<std::size_t>(rank) > std::min(n, m)) {
    throw NumericError("plant: rank out of range");
  }
  Rng rng(seed);
  std::vector<std::vector<double>> us, vs;
  us.push_back(std::vector<double>(n, 1.0 / std::sqrt(static_cast<double>(n))));
  vs.push_back(std::vector<double>(m, 1.0 / std::sqrt(static_cast<double>(m))));
  for (int r = 1; r < rank; ++r) {
    us.push_back(orthonormal_column(n, us, rng));
    vs.push_back(orthonormal_column(m, vs, rng));
  }

  PlantedMatrix out;
  out.sigma.resize(static_cast<std::size_t>(rank));
  out.sigma[0] = 1.0;
  for (int r = 1; r < rank; ++r) out.sigma[static_cast<std::size_t>(r)] =
      out.sigma[static_cast<std::size_t>(r - 1)] * rng.uniform(0.5, 0.8);

  out.w = Tensor({n, m});
  for (int r = 0; r < rank; ++r) {
    const double s = out.sigma[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < n; ++i) {
      const double uis = us[static_cast<std::size_t>(r)][i] * s;
      for (std::size_t j = 0; j < m; ++j) out.w[i * m + j] += uis * vs[static_cast<std::size_t>(r)][j];
    }
  }
  return out;
}

double best_row_constant_gap(const Tensor& w) {
  const std::size_t n = w.rows(), m = w.cols();
  Tensor diff({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += w.at(i, j);
    mean /= static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) diff.at(i, j) = w.at(i, j) - mean;
  }
  return spectral_norm(diff);
}

double best_column_constant_gap(const Tensor& w) {
  const std::size_t n = w.rows(), m = w.cols();
  Tensor diff({n, m});
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += w.at(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) diff.at(i, j) = w.at(i, j) - mean;
  }
  return spectral_norm(diff);
}

Tensor dense_gradient_fit(const Tensor& w_star, int iters) {
  Tensor w(w_star.shape());
  const double step = 0.5;  // on grad = (W - W*), contraction per iteration
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] -= step * (w[i] - w_star[i]);
  }
  return w;
}

TheoremTrial theorem_gap_check(const Tensor& w_star, double tol) {
  TheoremTrial t;
  t.n = w_star.rows();
  t.m = w_star.cols();
  const auto s = svd(w_star);
  t.sigma = s.spectrum.sigma;
  t.rank = s.spectrum.numerical_rank(1e-10);
  const double sigma2 = t.sigma.size() > 1 ? t.sigma[1] : 0.0;

  t.one_dir_gap = std::min(best_row_constant_gap(w_star), best_column_constant_gap(w_star));

  Tensor fitted = dense_gradient_fit(w_star);
  Tensor diff(w_star.shape());
  for (std::size_t i = 0; i < diff.numel(); ++i) diff[i] = w_star[i] - fitted[i];
  t.two_dir_gap = spectral_norm(diff);

  const bool lower_bound = t.one_dir_gap >= sigma2 - tol;
  const bool dense_below = t.rank <= 1 ? t.two_dir_gap <= sigma2 + tol : t.two_dir_gap < sigma2;
  const bool ordering = t.one_dir_gap >= t.two_dir_gap - tol;
  t.holds = lower_bound && dense_below && ordering;
  return t;
}

RankAnalysis run_rank_analysis(int trials, std::uint64_t seed) {
  RankAnalysis out;
  Rng rng(Rng::mix(seed, 0x72616e6bull));

  for (int i = 0; i < trials; ++i) {
    const int k = 2 + static_cast<int>(rng.below(3));  // K in {2,3,4}
    const std::size_t n = 6 + rng.below(11);           // up to 16
    const std::size_t m = 8 + rng.below(17);           // up to 24
    const auto planted = plant_low_rank(std::max<std::size_t>(n, static_cast<std::size_t>(k)),
                                        std::max<std::size_t>(m, static_cast<std::size_t>(k)),
                                        k, rng.next());
    auto trial = theorem_gap_check(planted.w);
    out.all_hold = out.all_hold && trial.holds;
    out.trials.push_back(std::move(trial));
  }

  // Eckart-Young residuals on dense random matrices up to 32x64.
  for (int i = 0; i < trials; ++i) {
    const std::size_t n = 4 + rng.below(29);  // up to 32
    const std::size_t m = 4 + rng.below(61);  // up to 64
    Tensor a({n, m});
    for (std::size_t j = 0; j < a.numel(); ++j) a[j] = rng.uniform(-1.0, 1.0);
    const auto s = svd(a);
    const int rank = s.spectrum.numerical_rank(1e-12);
    if (rank < 2) continue;
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(rank - 1)));
    const Tensor ak = truncate_rank(s, k);
    Tensor diff({n, m});
    for (std::size_t j = 0; j < a.numel(); ++j) diff[j] = a[j] - ak[j];
    const double direct = spectral_norm(diff);
    const double expected = s.spectrum.sigma[static_cast<std::size_t>(k)];
    out.max_ey_residual = std::max(out.max_ey_residual, std::abs(direct - expected));
    ++out.ey_trials;
  }
  return out;
}

void write_rank_report(const std::string& path, const RankAnalysis& analysis) {
  json trials = json::array();
  for (const auto& t : analysis.trials) {
    trials.push_back({{"rank", t.rank},
                      {"n", t.n},
                      {"m", t.m},
                      {"sigma", t.sigma},
                      {"one_dir_gap", t.one_dir_gap},
                      {"two_dir_gap", t.two_dir_gap},
                      {"holds", t.holds}});
  }
  json j{{"trials", trials},
         {"all_hold", analysis.all_hold},
         {"eckart_young", {{"trials", analysis.ey_trials},
                           {"max_residual", analysis.max_ey_residual}}}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("rank report: cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_heatmap_csv(const std::string& path, const Tensor& dense) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("heatmap: cannot write " + path);
  const std::size_t n = dense.rows(), m = dense.cols();
  char buf[64];
  auto put = [&](double v, bool lead_comma) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    if (lead_comma) out << ',';
    out << buf;
  };
  std::vector<double> col_mean(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row_mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double v = dense.at(i, j);
      put(v, j > 0);
      row_mean += v;
      col_mean[j] += v;
    }
    put(row_mean / static_cast<double>(m), true);
    out << '\n';
  }
  double grand = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    col_mean[j] /= static_cast<double>(n);
    grand += col_mean[j];
    put(col_mean[j], j > 0);
  }
  put(grand / static_cast<double>(m), true);
  out << '\n';
}

}  // namespace melon
