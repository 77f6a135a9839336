#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtur/image.hpp"
#include "mtur/network.hpp"
#include "mtur/physics.hpp"

namespace mtur::train {

// ------------------------------------------------------------ dataset

/// Supervision for the MT branch.
enum class MtTarget {
  estimated,  // dark-channel estimate of the degraded image (default)
  true_t,     // mean of the per-channel transmissions used to synthesize it
};

const char* to_string(MtTarget m) noexcept;
MtTarget mt_target_from_string(std::string_view name);

struct Sample {
  std::string id;
  ImageRGB degraded;
  ImageRGB reference;
  physics::TransmissionMap mt_target;
};

struct DatasetParams {
  std::size_t image_size = 64;
  MtTarget mt_target = MtTarget::estimated;
  physics::PhysicsParams physics;
  physics::AttenuationRanges attenuation;
  std::array<double, 2> airlight_r{0.05, 0.3};
  std::array<double, 2> airlight_gb{0.4, 0.9};
  double d_max = 2.0;
  /// Every transmission is 1: degraded == reference.
  bool force_unit_transmission = false;
  std::size_t jobs = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetParams& p);
void from_json(const nlohmann::json& j, DatasetParams& p);

/// Textured clean scene drawn from `seed` (gradients, shapes, stripes, noise).
ImageRGB procedural_scene(std::size_t size, std::uint64_t seed);

/// Synthesizes `n` degraded/clean/MT triples. Sample i depends only on
/// (seed, i), so the result does not change with `params.jobs`. With a
/// non-empty `clean` list, sample i uses a random crop of clean[i % size]
/// resized to image_size; otherwise scenes are procedural.
std::vector<Sample> make_synthetic_dataset(std::size_t n, const DatasetParams& params, std::uint64_t seed,
                                           const std::vector<ImageRGB>& clean = {});

/// FNV-1a over the ids and the raw pixel values of every sample.
std::string dataset_hash(const std::vector<Sample>& samples);

/// Writes images (PNG, or lossless .mttb when `lossless`) plus `manifest.json`:
/// a list of {degraded_path, reference_path, mt_path} relative to `dir`.
void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir, bool lossless);
std::vector<Sample> read_dataset(const std::filesystem::path& manifest);

// ------------------------------------------------------------ loss

/// mean |enh - ref| + lambda_mt * mean (mt - mt_target)^2.
template <typename T>
Var<T> compute_loss(const Var<T>& enhanced, const Var<T>& reference, const Var<T>& mt_pred, const Var<T>& mt_target,
                    double lambda_mt);

// ------------------------------------------------------------ training

struct TrainConfig {
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::size_t iterations = 100;
  double lambda_mt = 1.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t validate_every = 0;    // 0: no periodic validation
  std::size_t log_every = 0;         // 0: silent
  std::size_t image_size = 64;
  /// Random flips / 90 degree rotations of each training sample.
  bool augment = true;
  /// Checkpoints, the report and abort dumps go here; empty disables writing.
  std::filesystem::path output_dir;

  /// lr = 0 is accepted so that a run can be checked to leave weights intact.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct ValidationPoint {
  std::size_t iteration = 0;
  double psnr = 0;
  double ssim = 0;
  double mt_mae = 0;
};

struct TrainReport {
  std::vector<std::size_t> iterations;  // 1-based
  std::vector<double> loss;
  std::vector<double> iteration_ms;
  std::vector<ValidationPoint> validation;
  std::string final_checkpoint;

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// Adam over seeded, epoch-shuffled minibatches (last partial batch dropped),
/// with seeded dihedral augmentation when enabled.
///
/// A non-finite loss or gradient aborts with NumericalError after writing
/// `last_good.mttb` (weights before the failing step) and
/// `abort_batch.json` (offending sample indices) into output_dir.
template <typename T>
TrainReport train(net::MTURModel<T>& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const std::vector<Sample>* validation = nullptr);

/// Packs samples[indices] into N x C x H x W tensors.
template <typename T>
struct Batch {
  Tensor<T> degraded, reference, mt_target;
};
template <typename T>
Batch<T> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

// ------------------------------------------------------------ inference

struct Restored {
  ImageRGB enhanced;  // clamped to [0, 1]
  ImageGray mt;
};

template <typename T>
Restored infer(const net::MTURModel<T>& model, const ImageRGB& img);

/// Mean PSNR / SSIM of the model output, and MT mean absolute error against
/// the sample targets.
template <typename T>
ValidationPoint evaluate_model(const net::MTURModel<T>& model, const std::vector<Sample>& samples);

// ------------------------------------------------------------ benchmark

struct BenchResult {
  std::size_t image_size = 0;
  std::size_t threads = 1;
  std::size_t runs = 0;
  double wall_seconds = 0;
  double fps = 0;  // runs / wall_seconds
  double mean_latency_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  std::vector<double> latencies_ms;
  /// Relative gap between the wall clock and the time reconstructed from the
  /// per-run latencies (summed per worker, maximum over workers).
  double consistency_error = 0;

  nlohmann::json to_json() const;
};

/// Single-image forwards after `warmup` untimed runs. With threads > 1 the
/// runs are split over that many workers sharing the parameters.
BenchResult fps_benchmark(const net::MTURModel<float>& model, std::size_t image_size, std::size_t warmup,
                          std::size_t runs, std::size_t threads = 1);

/// Nearest-rank percentile of unsorted values, p in [0, 100].
double percentile(std::vector<double> values, double p);

}  // namespace mtur::train
