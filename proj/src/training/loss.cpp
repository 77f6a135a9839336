#include <cmath>

#include "mtur/error.hpp"
#include "mtur/training.hpp"

namespace mtur::train {

template <typename T>
Var<T> compute_loss(const Var<T>& enhanced, const Var<T>& reference, const Var<T>& mt_pred, const Var<T>& mt_target,
                    double lambda_mt) {
  if (!(lambda_mt >= 0.0) || !std::isfinite(lambda_mt)) throw ConfigError("lambda_mt must be finite and >= 0");
  if (enhanced.shape() != reference.shape()) {
    throw DimensionError("loss: enhanced " + shape_string(enhanced.shape()) + " vs reference " +
                         shape_string(reference.shape()));
  }
  if (mt_pred.shape() != mt_target.shape()) {
    throw DimensionError("loss: mt " + shape_string(mt_pred.shape()) + " vs target " +
                         shape_string(mt_target.shape()));
  }
  auto l1 = mean_abs_error(enhanced, reference);
  if (lambda_mt == 0.0) return l1;
  return add(l1, scale(mean_squared_error(mt_pred, mt_target), static_cast<T>(lambda_mt)));
}

template Var<float> compute_loss(const Var<float>&, const Var<float>&, const Var<float>&, const Var<float>&, double);
template Var<double> compute_loss(const Var<double>&, const Var<double>&, const Var<double>&, const Var<double>&,
                                  double);

}  // namespace mtur::train
