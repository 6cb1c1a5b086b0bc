#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ganevent/core/error.hpp"
#include "ganevent/core/tensor.hpp"

namespace ganevent::nn {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// AdamW with decoupled weight decay: the decay shrinks parameters directly
/// and never enters the moment estimates.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  const AdamWConfig& config() const noexcept { return cfg_; }
  std::int64_t steps() const noexcept { return step_; }

  /// One update of every parameter from its accumulated `grad`.
  void step(const ParameterRefs& params) {
    if (first_moment_.empty()) {
      for (const Parameter* p : params) {
        first_moment_.emplace_back(p->value.shape());
        second_moment_.emplace_back(p->value.shape());
      }
    }
    if (first_moment_.size() != params.size()) throw ContractError("AdamW: parameter list changed between steps");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const double decay = 1.0 - cfg_.learning_rate * cfg_.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      Tensor& m = first_moment_[k];
      Tensor& v = second_moment_[k];
      if (!m.same_shape(p.value) || !p.grad.same_shape(p.value))
        throw DimensionError("AdamW: shape mismatch for parameter " + p.name);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p.value[i] = p.value[i] * decay - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

  // Moment access for checkpointing.
  std::vector<Tensor>& first_moments() noexcept { return first_moment_; }
  std::vector<Tensor>& second_moments() noexcept { return second_moment_; }
  const std::vector<Tensor>& first_moments() const noexcept { return first_moment_; }
  const std::vector<Tensor>& second_moments() const noexcept { return second_moment_; }
  void set_steps(std::int64_t s) { step_ = s; }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
  std::int64_t step_ = 0;
};

inline void zero_grad(const ParameterRefs& params) {
  for (Parameter* p : params) p->zero_grad();
}

inline std::size_t parameter_count(const ParameterRefs& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

}  // namespace ganevent::nn
