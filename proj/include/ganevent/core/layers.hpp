#pragma once

#include <cmath>
#include <string>

#include "ganevent/core/autodiff.hpp"
#include "ganevent/core/random.hpp"

namespace ganevent::nn {

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill.
inline Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

/// y = x W + b with W stored (in x out).
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true)
      : weight(name + ".weight", init_uniform(in, out, in, rng)) {
    if (with_bias) bias = Parameter(name + ".bias", init_uniform(1, out, in, rng));
  }

  bool has_bias() const { return bias.value.size() > 0; }
  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }

  Var forward(Tape& tape, Var x) const {
    Var y = matmul(x, tape.param(weight));
    return has_bias() ? add(y, tape.param(bias)) : y;
  }

  void collect(ParameterRefs& out) {
    out.push_back(&weight);
    if (has_bias()) out.push_back(&bias);
  }
};

struct LayerNorm {
  Parameter gain;
  Parameter bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t width)
      : gain(name + ".gain", Tensor({1, width}, 1.0)), bias(name + ".bias", Tensor({1, width}, 0.0)) {}

  Var forward(Tape& tape, Var x) const {
    return layer_norm(x, tape.param(gain), tape.param(bias));
  }

  void collect(ParameterRefs& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

}  // namespace ganevent::nn
