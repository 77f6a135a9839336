#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mtur/adam.hpp"
#include "mtur/mttb.hpp"
#include "mtur/ops.hpp"

namespace mtur::net {

/// Architecture of the two-branch restoration network.
///
/// Channel widths: the shared stem produces `base_channels` (C) at 1/2
/// resolution; MT encoder stage i doubles to C * 2^i; the enhancement stream
/// runs at 1/4 resolution with 2C channels.
///
/// Ablation flags:
///  - use_mt_guidance = false removes every MT-dependent piece of the
///    enhancement path (lateral projections, feature fusion, final concat);
///  - use_skip_connection = false drops the lateral MT -> DRB projections;
///  - use_final_concat = false stops concatenating the MT map before the head;
///  - use_conv_after_concat = false replaces the two 3x3 head convs by one 1x1.
struct MTURConfig {
  std::size_t base_channels = 32;
  std::vector<std::size_t> drb_dilations{1, 1, 2, 2, 4, 8, 4, 2, 2, 1};
  std::size_t mt_encoder_blocks = 4;
  std::vector<std::size_t> fusion_points{4, 8};  // 1-based DRB indices
  std::size_t groups_gn = 8;
  bool use_mt_guidance = true;
  bool use_skip_connection = true;
  bool use_final_concat = true;
  bool use_conv_after_concat = true;
  /// Head predicts a residual added to the input image.
  bool residual_output = true;
  /// Zero the second conv of every DRB so each block starts as the identity.
  bool zero_init_residual = false;

  static MTURConfig tiny();
  /// "full", "basic", "no_skip", "no_concat", "no_conv_after_concat".
  static MTURConfig variant(std::string_view name, MTURConfig base);

  std::size_t enhancement_channels() const noexcept { return 2 * base_channels; }
  /// Groups used for a GroupNorm over `channels` channels.
  std::size_t groups_for(std::size_t channels) const noexcept;

  bool has_laterals() const noexcept { return use_mt_guidance && use_skip_connection; }
  bool has_fusion() const noexcept { return use_mt_guidance; }
  bool has_concat() const noexcept { return use_mt_guidance && use_final_concat; }

  /// Throws ConfigError naming the violated constraint.
  void validate() const;

  friend bool operator==(const MTURConfig&, const MTURConfig&) = default;
};

void to_json(nlohmann::json& j, const MTURConfig& c);
void from_json(const nlohmann::json& j, MTURConfig& c);

/// Scalar parameter count implied by a configuration.
std::size_t expected_parameter_count(const MTURConfig& cfg);

template <typename T>
struct ForwardResult {
  Var<T> enhanced;  // N x 3 x H x W, raw (unclamped)
  Var<T> mt;        // N x 1 x H x W, in (0, 1)
};

/// F = O + O * T, with T (N1HW) broadcast over the channels of O.
template <typename T>
Var<T> fuse(const Var<T>& features, const Var<T>& mt);

template <typename T>
class MTURModel {
 public:
  /// Initialization is deterministic per parameter name: each tensor draws
  /// from a stream derived from (seed, name), so ablations that drop layers
  /// leave the remaining initial weights unchanged.
  static MTURModel build(const MTURConfig& cfg, std::uint64_t seed);

  MTURModel(MTURModel&&) noexcept = default;
  MTURModel& operator=(MTURModel&&) noexcept = default;
  MTURModel(const MTURModel&) = delete;
  MTURModel& operator=(const MTURModel&) = delete;

  /// Deep copy in the same or another precision.
  template <typename U>
  MTURModel<U> cast() const;
  MTURModel clone() const { return cast<T>(); }

  const MTURConfig& config() const noexcept { return cfg_; }
  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  bool has_param(std::string_view name) const;
  const Var<T>& param(std::string_view name) const;
  std::size_t parameter_count() const;

  /// Any H, W >= 1 is accepted: stride-2 stages round up and decoder stages
  /// resample to the exact size of their skip partner.
  ForwardResult<T> forward(const Var<T>& input) const;

  /// The first `blocks` dilated residual blocks alone (no lateral inputs).
  Var<T> drb_stack(const Var<T>& stream, std::size_t blocks) const;

 private:
  template <typename U>
  friend class MTURModel;
  MTURModel() = default;

  void add(std::string name, Tensor<T> value);
  Var<T> conv(const Var<T>& x, const std::string& name, const Conv2dOptions& opt = {}) const;
  Var<T> drb(const Var<T>& x, std::size_t index) const;

  MTURConfig cfg_;
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ------------------------------------------------------------ describe

struct LayerSummary {
  std::string name;
  std::string kind;
  std::size_t out_channels = 0;
  std::size_t out_height = 0, out_width = 0;
  std::size_t kernel = 1, stride = 1, dilation = 1;
  std::size_t receptive_field = 1;  // in input pixels, along the enhancement path
};

struct ArchitectureSummary {
  std::size_t input_height = 0, input_width = 0;
  std::vector<LayerSummary> layers;
  std::vector<std::size_t> drb_dilations;
  /// Receptive field after each DRB measured in enhancement-stream pixels.
  std::vector<std::size_t> drb_receptive_field;
  std::size_t parameter_count = 0;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

/// Per-layer shapes and receptive fields for an input of the given size.
ArchitectureSummary describe(const MTURConfig& cfg, std::size_t height = 64, std::size_t width = 64);

/// Receptive field (stream pixels) of a chain of 3x3 DRBs with the given dilations.
std::size_t drb_receptive_field(std::span<const std::size_t> dilations);

// ------------------------------------------------------------ checkpoints

/// `<stem>.json` next to an MTTB checkpoint path.
std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint);

/// Parameters as MTTB entries (model precision, model order) plus the JSON
/// config sidecar.
template <typename T>
void save_checkpoint(const MTURModel<T>& model, const std::filesystem::path& path);

/// Loads a checkpoint and its sidecar. Missing, extra or mis-shaped entries
/// throw ConfigError listing every disagreement.
template <typename T>
MTURModel<T> load_checkpoint(const std::filesystem::path& path);

/// Assigns `entries` to an existing model with the same strict validation.
template <typename T>
void assign_parameters(MTURModel<T>& model, const std::vector<MttbEntry>& entries);

}  // namespace mtur::net
