#pragma once

// AdamW with decoupled weight decay over a named parameter list, and the
// warmup + cosine learning-rate schedule. Updates run in registration order
// so training is bit-reproducible.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gaitmae/tensor.hpp"

namespace gaitmae {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  explicit AdamW(std::vector<std::pair<std::string, Tensor>> params,
                 AdamWConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, p] : params_) {
      (void)name;
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) {
      (void)name;
      p.zero_grad();
    }
  }

  // theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& [name, p] = params_[pi];
      auto& theta = p.values();
      const auto& g = p.grad();
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(g[i]))
          throw std::runtime_error("adamw: non-finite gradient in parameter '" + name +
                                   "' at element " + std::to_string(i));
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps) +
                    lr * cfg_.weight_decay * theta[i];
      }
    }
  }

  std::uint64_t step_count() const { return t_; }
  void set_step_count(std::uint64_t t) { t_ = t; }
  const AdamWConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
  std::vector<std::vector<double>>& moment1() { return m_; }
  std::vector<std::vector<double>>& moment2() { return v_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
  AdamWConfig cfg_;
};

// Linear warmup to lr_max over [0, warmup), then cosine decay to lr_min at
// total_steps. When warmup == total_steps the cosine segment is empty and the
// endpoint value lr_min wins.
inline double lr_schedule(std::int64_t step, std::int64_t total_steps,
                          std::int64_t warmup_steps, double lr_max, double lr_min) {
  if (step < 0 || total_steps < 0 || warmup_steps < 0 || step > total_steps)
    throw std::invalid_argument("lr_schedule: need 0 <= step <= total_steps");
  if (step < warmup_steps)
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return lr_min;
  const double t = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  constexpr double kPi = 3.14159265358979323846;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(kPi * t));
}

}  // namespace gaitmae
