#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "camue/numerics/tape.hpp"

namespace camue {

struct AdamState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<DenseMatrix> first_moment;
  std::vector<DenseMatrix> second_moment;
};

/// One bias-corrected Adam update of every parameter in place. Moment buffers
/// are created on the first call and must keep matching the parameter list.
inline void adam_step(std::span<Parameter* const> params, std::span<const DenseMatrix> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k].same_shape(params[k]->value) || !state.first_moment[k].same_shape(params[k]->value)) {
      throw ShapeError("adam_step: gradient " + grads[k].shape_string() + " does not match parameter '" +
                       params[k]->name + "' " + params[k]->value.shape_string());
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const double step_size = state.learning_rate / correction1;

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value.data();
    auto g = grads[k].data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] / correction2) + state.epsilon);
    }
  }
}

}  // namespace camue
