#include "mtur/adam.hpp"

#include <cmath>

#include "mtur/error.hpp"

namespace mtur {

template <typename T>
void adam_step(std::span<Parameter<T>> params, const Gradients<T>& grads, AdamState<T>& state) {
  if (!(state.lr >= 0)) throw ConfigError("adam: learning rate must be >= 0");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
      state.m.emplace_back(p.var.shape());
      state.v.emplace_back(p.var.shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor<T>* g = grads.find(params[k].var);
    if (g && !g->all_finite()) {
      throw NumericalError("adam: non-finite gradient for parameter '" + params[k].name + "'");
    }
    if (state.m[k].shape() != params[k].var.shape()) {
      throw DimensionError("adam: moment shape mismatch for parameter '" + params[k].name + "'");
    }
  }

  ++state.t;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor<T>* g = grads.find(params[k].var);
    Tensor<T>& w = params[k].var.mutable_leaf_value();
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = state.lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps);
      w[i] = static_cast<T>(w[i] - step);
    }
  }
}

template void adam_step(std::span<Parameter<float>>, const Gradients<float>&, AdamState<float>&);
template void adam_step(std::span<Parameter<double>>, const Gradients<double>&, AdamState<double>&);

}  // namespace mtur
