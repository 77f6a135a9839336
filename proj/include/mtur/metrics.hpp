#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtur/image.hpp"

namespace mtur::metrics {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) with the MSE taken over every channel of every pixel,
/// capped at kPsnrCap.
double psnr(const ImageRGB& a, const ImageRGB& b);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Single-scale SSIM on BT.601 luma, Gaussian window, mean over the windows
/// that lie fully inside the image. Throws DimensionError for images smaller
/// than the window.
double ssim(const ImageRGB& a, const ImageRGB& b, const SsimParams& params = {});

/// Normalized 1-D Gaussian taps used by ssim().
std::vector<double> gaussian_window(std::size_t size, double sigma);

/// Coefficients and block sizes of the no-reference underwater metrics.
struct UnderwaterConstants {
  // UCIQE (Yang & Sowmya 2015).
  double uciqe_chroma = 0.4680;
  double uciqe_contrast = 0.2745;
  double uciqe_saturation = 0.2576;
  double uciqe_tail = 0.01;  // fraction of L used for each end of the contrast term
  // UIQM (Panetta, Gao & Agaian 2016).
  double uiqm_uicm = 0.0282;
  double uiqm_uism = 0.2953;
  double uiqm_uiconm = 3.5753;
  double uicm_trim = 0.1;  // alpha trimmed from each tail of RG / YB
  std::size_t block = 8;
  std::array<double, 3> uism_channel_weights{0.299, 0.587, 0.114};
};

struct UciqeTerms {
  double sigma_chroma = 0;    // std of sqrt(a^2 + b^2) / 100
  double contrast = 0;        // top minus bottom tail mean of L / 100
  double mean_saturation = 0; // HSV S
  double score = 0;
};

struct UiqmTerms {
  double uicm = 0;
  double uism = 0;
  double uiconm = 0;
  double score = 0;
};

UciqeTerms uciqe_terms(const ImageRGB& img, const UnderwaterConstants& k = {});
double uciqe(const ImageRGB& img, const UnderwaterConstants& k = {});

/// UICM works on opponent channels RG = R - G and YB = (R + G) / 2 - B on the
/// 0..255 scale: -0.0268 |mu| + 0.1586 sigma, with alpha-trimmed means and
/// variances about those means over all pixels.
double uicm(const ImageRGB& img, const UnderwaterConstants& k = {});
/// Weighted per-channel EME of (Sobel magnitude x channel), 8x8 blocks.
double uism(const ImageRGB& img, const UnderwaterConstants& k = {});
/// -mean over blocks of r ln r with r = (max - min) / (max + min) of luma.
double uiconm(const ImageRGB& img, const UnderwaterConstants& k = {});
UiqmTerms uiqm_terms(const ImageRGB& img, const UnderwaterConstants& k = {});
double uiqm(const ImageRGB& img, const UnderwaterConstants& k = {});

/// EME = 2 / (k1 k2) sum ln(max / min) over non-overlapping blocks of a plane.
/// Trailing rows/columns that do not fill a block are ignored; blocks whose
/// min or max is zero contribute 0.
double eme(const std::vector<double>& plane, std::size_t height, std::size_t width, std::size_t block);

/// Sobel gradient magnitude with edge replication.
std::vector<double> sobel_magnitude(const std::vector<double>& plane, std::size_t height, std::size_t width);

// ------------------------------------------------------------ reports

struct MetricRecord {
  std::string id;
  std::optional<double> psnr;
  std::optional<double> ssim;
  double uiqm = 0;
  double uciqe = 0;
  std::optional<double> timing_ms;
};

/// Full-reference metrics when `reference` is given, no-reference always.
MetricRecord evaluate(std::string id, const ImageRGB& restored, const ImageRGB* reference,
                      const UnderwaterConstants& k = {});

struct Summary {
  double mean = 0;
  double std = 0;  // population
  std::size_t count = 0;
};

struct EvalReport {
  std::string config_hash;
  std::vector<MetricRecord> per_image;
  std::map<std::string, Summary> aggregate;

  /// Recomputes `aggregate` from `per_image`.
  void summarize();
  nlohmann::json to_json() const;
  /// One row per method: method, then mean and std of every metric present.
  std::string to_csv(const std::string& method) const;
};

void to_json(nlohmann::json& j, const MetricRecord& r);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Hash of the canonical (sorted-key, compact) JSON dump.
std::string config_hash(const nlohmann::json& config);

}  // namespace mtur::metrics
