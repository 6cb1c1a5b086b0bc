#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ganevent/core/autodiff.hpp"
#include "ganevent/core/optim.hpp"

namespace ganevent::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

enum class Stencil { three_point, five_point, adaptive };

/// Compares backward() against central differences for every coordinate of
/// every parameter. `loss` builds a scalar on the given tape from the
/// current parameter values and must be deterministic.
///
/// three_point uses step h. five_point is fourth-order accurate and uses step
/// 100h, which keeps rounding noise low on very small gradients but may step
/// across a ReLU kink. adaptive computes both and keeps the estimate closer to
/// the analytic value, coordinate by coordinate.
inline GradCheckResult finite_diff_check(const std::function<Var(Tape&)>& loss, const ParameterRefs& params,
                                         double h = 1e-5, Stencil stencil = Stencil::adaptive) {
  zero_grad(params);
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    Tape tape;
    return loss(tape).item();
  };
  auto relative = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); };
  GradCheckResult result;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      auto at = [&](double offset) {
        p->value[i] = saved + offset;
        return evaluate();
      };
      auto three = [&] { return (at(h) - at(-h)) / (2.0 * h); };
      auto five = [&] {
        const double w = 100.0 * h;
        return (-at(2.0 * w) + 8.0 * at(w) - 8.0 * at(-w) + at(-2.0 * w)) / (12.0 * w);
      };
      const double analytic = p->grad[i];
      double numeric = 0.0;
      switch (stencil) {
        case Stencil::three_point: numeric = three(); break;
        case Stencil::five_point: numeric = five(); break;
        case Stencil::adaptive: {
          const double a = three(), b = five();
          numeric = relative(analytic, a) <= relative(analytic, b) ? a : b;
          break;
        }
      }
      p->value[i] = saved;
      const double err = relative(analytic, numeric);
      if (err > result.max_relative_error) result = {err, p->name, i, analytic, numeric};
    }
  }
  return result;
}

}  // namespace ganevent::nn
