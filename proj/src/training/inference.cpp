#include <cmath>

#include "mtur/error.hpp"
#include "mtur/metrics.hpp"
#include "mtur/training.hpp"

namespace mtur::train {

template <typename T>
Restored infer(const net::MTURModel<T>& model, const ImageRGB& img) {
  if (img.height() == 0 || img.width() == 0) throw DimensionError("infer: empty image");
  auto out = model.forward(Var<T>::constant(to_tensor<T>(img)));
  if (!out.enhanced.value().all_finite()) throw NumericalError("infer: network output is not finite");
  // The image constructors clamp to [0, 1].
  return Restored{rgb_from_tensor(out.enhanced.value()), gray_from_tensor(out.mt.value())};
}

template <typename T>
ValidationPoint evaluate_model(const net::MTURModel<T>& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw UsageError("evaluate_model: no samples");
  ValidationPoint v;
  for (const auto& s : samples) {
    const auto r = infer(model, s.degraded);
    v.psnr += metrics::psnr(r.enhanced, s.reference);
    v.ssim += metrics::ssim(r.enhanced, s.reference);
    double mae = 0;
    const auto& a = r.mt.values();
    const auto& b = s.mt_target.values.values();
    for (std::size_t i = 0; i < a.size(); ++i) mae += std::abs(a[i] - b[i]);
    v.mt_mae += mae / static_cast<double>(a.size());
  }
  const double n = static_cast<double>(samples.size());
  v.psnr /= n;
  v.ssim /= n;
  v.mt_mae /= n;
  return v;
}

template Restored infer(const net::MTURModel<float>&, const ImageRGB&);
template Restored infer(const net::MTURModel<double>&, const ImageRGB&);
template ValidationPoint evaluate_model(const net::MTURModel<float>&, const std::vector<Sample>&);
template ValidationPoint evaluate_model(const net::MTURModel<double>&, const std::vector<Sample>&);

}  // namespace mtur::train
