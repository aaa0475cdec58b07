#include "gramtex/adam.hpp"

#include <cmath>

namespace gramtex {

AdamState AdamState::for_parameters(std::span<const Tensor> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.push_back(Tensor::zeros(p.shape(), p.dtype()));
    state.second_moment.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
  return state;
}

namespace {

void check_shapes(std::span<Tensor> params, const AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but state tracks " +
                         std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != state.first_moment[i].shape() || params[i].dtype() != state.first_moment[i].dtype()) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has shape " +
                           shape_string(params[i].shape()) + ", moments have " +
                           shape_string(state.first_moment[i].shape()));
    }
  }
}

template <class T>
void update(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> v, const AdamConfig& c,
            double bias1, double bias2) {
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T lr = static_cast<T>(c.learning_rate), eps = static_cast<T>(c.epsilon);
  const T c1 = static_cast<T>(bias1), c2 = static_cast<T>(bias2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T gi = g.empty() ? T(0) : g[i];
    m[i] = b1 * m[i] + (T(1) - b1) * gi;
    v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
    const T m_hat = m[i] / c1;
    const T v_hat = v[i] / c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  check_shapes(params, state);
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].defined() && grads[i].shape() != params[i].shape()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has shape " +
                           shape_string(grads[i].shape()) + ", parameter has " + shape_string(params[i].shape()));
    }
  }
  ++state.step;
  const double bias1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    dispatch(params[i].dtype(), [&]<class T>() {
      std::span<const T> g = grads[i].defined() ? grads[i].data<T>() : std::span<const T>{};
      update<T>(params[i].mutable_data<T>(), g, state.first_moment[i].mutable_data<T>(),
                state.second_moment[i].mutable_data<T>(), state.config, bias1, bias2);
    });
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  check_shapes(params, state);
  ++state.step;
  const double bias1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    dispatch(params[i].dtype(), [&]<class T>() {
      std::span<const T> g = params[i].has_grad() ? params[i].grad_data<T>() : std::span<const T>{};
      update<T>(params[i].mutable_data<T>(), g, state.first_moment[i].mutable_data<T>(),
                state.second_moment[i].mutable_data<T>(), state.config, bias1, bias2);
    });
  }
}

}  // namespace gramtex
