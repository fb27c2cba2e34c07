#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "melon/error.hpp"
#include "melon/rank_analysis.hpp"
#include "melon/rng.hpp"
#include "melon/svd.hpp"

using namespace melon;

namespace {

Tensor random_matrix(std::size_t n, std::size_t m, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor a({n, m});
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

double frob(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("svd of a diagonal matrix") {
  Tensor a({2, 2}, {1.0, 0.0, 0.0, 0.5});
  const auto s = svd(a);
  CHECK(s.spectrum.sigma[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.spectrum.sigma[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.spectrum.numerical_rank() == 2);
}

TEST_CASE("rank-1 outer product has a collapsed spectrum") {
  Rng rng(2);
  Tensor a({5, 7});
  std::vector<double> u(5), v(7);
  for (auto& x : u) x = rng.uniform(-1, 1);
  for (auto& x : v) x = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 7; ++j) a.at(i, j) = u[i] * v[j];
  }
  const auto s = svd(a);
  CHECK(s.spectrum.sigma[1] / s.spectrum.sigma[0] < 1e-12);
  CHECK(rank_ratio(a) < 1e-12);
}

TEST_CASE("reconstruction residual stays tiny") {
  Rng rng(3);
  for (const auto& [n, m] : {std::pair<std::size_t, std::size_t>{8, 12},
                            {12, 8},
                            {32, 64},
                            {1, 9},
                            {9, 1}}) {
    const Tensor a = random_matrix(n, m, rng);
    const auto s = svd(a);
    const Tensor back = s.reconstruct();
    Tensor diff({n, m});
    for (std::size_t i = 0; i < a.numel(); ++i) diff[i] = a[i] - back[i];
    CHECK(frob(diff) / std::max(1e-30, frob(a)) < 1e-10);
    // singular values sorted, non-negative
    for (std::size_t k = 1; k < s.spectrum.sigma.size(); ++k) {
      CHECK(s.spectrum.sigma[k] <= s.spectrum.sigma[k - 1]);
      CHECK(s.spectrum.sigma[k] >= 0.0);
    }
  }
  Tensor bad({2, 2});
  Tensor::set_checked(false);
  bad[0] = std::nan("");
  CHECK_THROWS_AS(svd(bad), NumericError);
  Tensor::set_checked(true);
}

TEST_CASE("eckart-young on diagonal and random matrices") {
  Tensor diag({2, 2}, {1.0, 0.0, 0.0, 0.5});
  CHECK(best_rank_k_error(diag, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(best_rank_k_error(diag, 0), NumericError);
  CHECK_THROWS_AS(best_rank_k_error(diag, 2), NumericError);

  Rng rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 4 + rng.below(12), m = 4 + rng.below(12);
    const Tensor a = random_matrix(n, m, rng);
    const auto s = svd(a);
    const int rank = s.spectrum.numerical_rank(1e-12);
    for (int k = 1; k < std::min(rank, 4); ++k) {
      const Tensor ak = truncate_rank(s, k);
      Tensor diff({n, m});
      for (std::size_t i = 0; i < a.numel(); ++i) diff[i] = a[i] - ak[i];
      const double direct = spectral_norm(diff);
      CHECK(std::abs(direct - best_rank_k_error(a, k)) < 1e-10);
    }
  }
}

TEST_CASE("no sampled rank-1 candidate beats sigma_2") {
  Rng rng(6);
  const Tensor a = random_matrix(6, 6, rng);
  const double sigma2 = svd(a).spectrum.sigma[1];
  double best = 1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> u(6), v(6);
    for (auto& x : u) x = rng.uniform(-2, 2);
    for (auto& x : v) x = rng.uniform(-2, 2);
    Tensor diff({6, 6});
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) diff.at(i, j) = a.at(i, j) - u[i] * v[j];
    }
    best = std::min(best, spectral_norm(diff));
  }
  CHECK(best >= sigma2 - 1e-9);
}

TEST_CASE("planted matrices expose the optimality gap ordering") {
  SUBCASE("diagonal example") {
    Tensor w({4, 5});
    w.at(0, 0) = 1.0;
    w.at(1, 1) = 0.5;
    const auto t = theorem_gap_check(w);
    CHECK(t.one_dir_gap >= 0.5 - 1e-9);
    CHECK(t.two_dir_gap < 0.5);
    CHECK(t.holds);
  }
  SUBCASE("rank-1 matrix: both gaps collapse") {
    Rng rng(7);
    Tensor w({4, 4});
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) w.at(i, j) = (1.0 + i) * (0.5 + j);
    }
    const auto t = theorem_gap_check(w);
    CHECK(t.rank == 1);
    CHECK(t.two_dir_gap < 1e-9);
    CHECK(t.holds);
  }
  SUBCASE("planted rank-3, structured fit achieves sigma_2") {
    const auto planted = plant_low_rank(10, 16, 3, 99);
    const auto s = svd(planted.w);
    CHECK(s.spectrum.numerical_rank() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(s.spectrum.sigma[static_cast<std::size_t>(k)] ==
            doctest::Approx(planted.sigma[static_cast<std::size_t>(k)]).epsilon(1e-10));
    }
    const auto t = theorem_gap_check(planted.w);
    const double sigma2 = planted.sigma[1];
    CHECK(t.one_dir_gap >= sigma2 - 1e-6);
    CHECK(std::abs(t.one_dir_gap - sigma2) < 1e-3);  // the mean fit reaches the bound
    CHECK(t.two_dir_gap < sigma2);
    CHECK(t.holds);

    // alternating/closed-form least squares cannot beat the planted sigma_2:
    // random perturbations of the row-mean fit only increase the gap
    Rng rng(17);
    const std::size_t n = planted.w.rows(), m = planted.w.cols();
    std::vector<double> row_mean(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) row_mean[i] += planted.w.at(i, j);
      row_mean[i] /= static_cast<double>(m);
    }
    for (int trial = 0; trial < 50; ++trial) {
      Tensor diff({n, m});
      for (std::size_t i = 0; i < n; ++i) {
        const double v = row_mean[i] + rng.uniform(-0.05, 0.05);
        for (std::size_t j = 0; j < m; ++j) diff.at(i, j) = planted.w.at(i, j) - v;
      }
      CHECK(spectral_norm(diff) >= t.one_dir_gap - 1e-9);
    }
  }
}

TEST_CASE("rank analysis sweep holds on every trial") {
  const auto analysis = run_rank_analysis(20, 12345);
  CHECK(analysis.trials.size() == 20);
  CHECK(analysis.all_hold);
  CHECK(analysis.ey_trials > 0);
  CHECK(analysis.max_ey_residual < 1e-10);

  const auto path = (std::filesystem::temp_directory_path() / "melon_rank.json").string();
  write_rank_report(path, analysis);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().find("\"all_hold\": true") != std::string::npos);
}

TEST_CASE("heatmap csv carries the marginals") {
  Tensor dense({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const auto path = (std::filesystem::temp_directory_path() / "melon_heat.csv").string();
  write_heatmap_csv(path, dense);
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);  // n + 1 marginal row
  CHECK(lines[0] == "1,2,3,4,2.5");
  CHECK(lines[3] == "5,6,7,8,6.5");  // column means + grand mean
}
