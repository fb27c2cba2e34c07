#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "melon/params.hpp"

namespace melon {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient
};

// Standard Adam over a ParamStore, one moment pair per parameter tensor.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& params, AdamOptions opt) : opt_(opt) {
    for (int p = 0; p < params.count(); ++p) {
      m_.emplace_back(params.tensor(p).shape());
      v_.emplace_back(params.tensor(p).shape());
    }
  }

  const AdamOptions& options() const { return opt_; }
  std::uint64_t steps() const { return t_; }
  std::size_t skipped_nonfinite() const { return skipped_; }

  // grads must be aligned with the store's parameters. Non-finite gradient
  // coordinates are skipped and counted.
  void step(ParamStore& params, std::span<const Tensor> grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (int p = 0; p < params.count(); ++p) {
      Tensor& w = params.tensor(p);
      const Tensor& g = grads[static_cast<std::size_t>(p)];
      Tensor& m = m_[static_cast<std::size_t>(p)];
      Tensor& v = v_[static_cast<std::size_t>(p)];
      for (std::size_t i = 0; i < w.numel(); ++i) {
        double gi = g[i];
        if (!std::isfinite(gi)) {
          ++skipped_;
          continue;
        }
        gi += opt_.weight_decay * w[i];
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
      }
    }
  }

  std::span<const Tensor> first_moments() const { return m_; }
  std::span<const Tensor> second_moments() const { return v_; }

 private:
  AdamOptions opt_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
  std::size_t skipped_ = 0;
};

}  // namespace melon
