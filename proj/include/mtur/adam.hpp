#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtur/autograd.hpp"

namespace mtur {

/// A trainable leaf with a stable name.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
};

template <typename T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor<T>> m;  // one per parameter, lazily sized on the first step
  std::vector<Tensor<T>> v;
};

/// One bias-corrected Adam update over `params` (in place).
///
/// Parameters absent from `grads` are treated as having a zero gradient.
/// Throws NumericalError naming the first parameter whose gradient is not
/// finite; in that case nothing is modified.
template <typename T>
void adam_step(std::span<Parameter<T>> params, const Gradients<T>& grads, AdamState<T>& state);

extern template void adam_step(std::span<Parameter<float>>, const Gradients<float>&, AdamState<float>&);
extern template void adam_step(std::span<Parameter<double>>, const Gradients<double>&, AdamState<double>&);

}  // namespace mtur
