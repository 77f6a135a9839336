#include <algorithm>
#include <cmath>

#include "mtur/error.hpp"
#include "mtur/network.hpp"
#include "mtur/rng.hpp"

namespace mtur::net {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr double kLinearGain = 1.0;
constexpr double kReluGain = 1.4142135623730951;
constexpr double kResidualGain = 0.1;

std::string drb_name(std::size_t k) { return "enh.drb" + std::to_string(k); }

}  // namespace

template <typename T>
Var<T> fuse(const Var<T>& features, const Var<T>& mt) {
  const auto& o = features.value();
  const auto& t = mt.value();
  require_nchw(o, "fuse features");
  require_nchw(t, "fuse map");
  if (t.dim(1) != 1) throw DimensionError("fuse: map must have 1 channel, got " + shape_string(t.shape()));
  if (o.dim(0) != t.dim(0) || o.dim(2) != t.dim(2) || o.dim(3) != t.dim(3)) {
    throw DimensionError("fuse: features " + shape_string(o.shape()) + " vs map " + shape_string(t.shape()));
  }
  return mtur::add(features, mul(features, mt));
}

template <typename T>
void MTURModel<T>::add(std::string name, Tensor<T> value) {
  index_.emplace(name, params_.size());
  params_.push_back(Parameter<T>{std::move(name), Var<T>::leaf(std::move(value), true)});
}

template <typename T>
MTURModel<T> MTURModel<T>::build(const MTURConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  MTURModel m;
  m.cfg_ = cfg;

  // Fan-in scaled uniform weights, bound = gain * sqrt(3 / fan_in): gain 1
  // keeps unit variance through linear/SELU/GN layers, sqrt(2) compensates a
  // following ReLU, and small gains start residual branches near identity.
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k, double gain) {
    Tensor<T> w(Shape{out, in, k, k});
    if (gain > 0.0) {
      Rng rng(derive_seed(seed, fnv1a(name)));
      const double bound = gain * std::sqrt(3.0 / static_cast<double>(in * k * k));
      for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    m.add(name + ".weight", std::move(w));
    m.add(name + ".bias", Tensor<T>(Shape{out}));
  };
  auto gn = [&](const std::string& name, std::size_t c) {
    m.add(name + ".gamma", Tensor<T>(Shape{c}, T{1}));
    m.add(name + ".beta", Tensor<T>(Shape{c}));
  };

  const std::size_t C = cfg.base_channels, E = cfg.mt_encoder_blocks, Ce = cfg.enhancement_channels();
  conv("stem.conv", 3, C, 3, kLinearGain);
  gn("stem.gn", C);
  for (std::size_t i = 1; i <= E; ++i) {
    const std::string n = "mt.enc" + std::to_string(i);
    conv(n + ".conv", C << (i - 1), C << i, 3, kLinearGain);
    gn(n + ".gn", C << i);
  }
  for (std::size_t i = E; i >= 1; --i) {
    const std::string n = "mt.dec" + std::to_string(i);
    conv(n + ".conv", C << i, C << (i - 1), 3, kLinearGain);
    gn(n + ".gn", C << (i - 1));
  }
  conv("mt.head", C, 1, 1, kLinearGain);
  conv("enh.entry", C, Ce, 3, kReluGain);
  for (std::size_t k = 1; k <= cfg.drb_dilations.size(); ++k) {
    conv(drb_name(k) + ".conv1", Ce, Ce, 3, kReluGain);
    conv(drb_name(k) + ".conv2", Ce, Ce, 3, cfg.zero_init_residual ? 0.0 : kResidualGain);
  }
  if (cfg.has_laterals()) {
    for (auto p : cfg.fusion_points) conv("enh.lateral" + std::to_string(p), 2 * C, Ce, 1, kResidualGain);
  }
  conv("enh.reduce", Ce, C, 1, kLinearGain);
  const std::size_t head_in = C + (cfg.has_concat() ? 1 : 0);
  const double out_gain = cfg.residual_output ? kResidualGain : kLinearGain;
  if (cfg.use_conv_after_concat) {
    conv("head.conv1", head_in, C, 3, kLinearGain);
    conv("head.conv2", C, 3, 3, out_gain);
  } else {
    conv("head.proj", head_in, 3, 1, out_gain);
  }
  return m;
}

template <typename T>
template <typename U>
MTURModel<U> MTURModel<T>::cast() const {
  MTURModel<U> m;
  m.cfg_ = cfg_;
  for (const auto& p : params_) m.add(p.name, p.var.value().template cast<U>());
  return m;
}

template <typename T>
bool MTURModel<T>::has_param(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename T>
const Var<T>& MTURModel<T>::param(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("model has no parameter '" + std::string(name) + "'");
  return params_[it->second].var;
}

template <typename T>
std::size_t MTURModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().numel();
  return n;
}

template <typename T>
Var<T> MTURModel<T>::conv(const Var<T>& x, const std::string& name, const Conv2dOptions& opt) const {
  return conv2d(x, param(name + ".weight"), param(name + ".bias"), opt);
}

template <typename T>
Var<T> MTURModel<T>::drb(const Var<T>& x, std::size_t index) const {
  const std::size_t d = cfg_.drb_dilations[index - 1];
  const std::string n = drb_name(index);
  auto h = activation(conv(x, n + ".conv1", {1, d}), Activation::relu);
  return mtur::add(x, conv(h, n + ".conv2", {1, d}));
}

template <typename T>
Var<T> MTURModel<T>::drb_stack(const Var<T>& stream, std::size_t blocks) const {
  if (blocks > cfg_.drb_dilations.size()) throw UsageError("drb_stack: model has fewer blocks");
  Var<T> e = stream;
  for (std::size_t k = 1; k <= blocks; ++k) e = drb(e, k);
  return e;
}

template <typename T>
ForwardResult<T> MTURModel<T>::forward(const Var<T>& input) const {
  const auto& x = input.value();
  require_nchw(x, "forward input");
  if (x.dim(1) != 3) throw DimensionError("forward: axis 1 of input must be 3 (RGB), got " + std::to_string(x.dim(1)));
  const std::size_t H = x.dim(2), W = x.dim(3);
  if (H == 0 || W == 0) throw DimensionError("forward: empty spatial extent");
  const std::size_t E = cfg_.mt_encoder_blocks;
  const Conv2dOptions down{2, 1};

  auto norm_act = [&](const Var<T>& v, const std::string& gn_name) {
    const std::size_t c = v.value().dim(1);
    return activation(
        group_norm(v, cfg_.groups_for(c), param(gn_name + ".gamma"), param(gn_name + ".beta")), Activation::selu);
  };

  // Shared stem, 1/2 resolution.
  const Var<T> stem = norm_act(conv(input, "stem.conv", down), "stem.gn");

  // MT branch: encoder, mirrored decoder with additive encoder skips.
  std::vector<Var<T>> enc{stem};
  for (std::size_t i = 1; i <= E; ++i) {
    const std::string n = "mt.enc" + std::to_string(i);
    enc.push_back(norm_act(conv(enc.back(), n + ".conv", down), n + ".gn"));
  }
  Var<T> dec = enc[E];
  Var<T> mt_quarter = E == 1 ? enc[1] : Var<T>{};  // MT features at enhancement-stream resolution
  for (std::size_t i = E; i >= 1; --i) {
    const std::string n = "mt.dec" + std::to_string(i);
    const auto& skip = enc[i - 1].value();
    auto up = resample(dec, skip.dim(2), skip.dim(3), ResampleMode::nearest);
    dec = mtur::add(norm_act(conv(up, n + ".conv"), n + ".gn"), enc[i - 1]);
    if (i == 2) mt_quarter = dec;
  }
  auto mt_half = activation(conv(dec, "mt.head"), Activation::sigmoid);
  auto mt = resample(mt_half, H, W, ResampleMode::bilinear);

  // Enhancement branch, 1/4 resolution.
  Var<T> e = activation(conv(stem, "enh.entry", down), Activation::relu);
  for (std::size_t k = 1; k <= cfg_.drb_dilations.size(); ++k) {
    e = drb(e, k);
    if (cfg_.has_laterals() &&
        std::find(cfg_.fusion_points.begin(), cfg_.fusion_points.end(), k) != cfg_.fusion_points.end()) {
      e = mtur::add(e, conv(mt_quarter, "enh.lateral" + std::to_string(k)));
    }
  }
  if (cfg_.has_fusion()) {
    const auto& ev = e.value();
    e = fuse(e, resample(mt, ev.dim(2), ev.dim(3), ResampleMode::bilinear));
  }

  Var<T> h = resample(conv(e, "enh.reduce"), H, W, ResampleMode::bilinear);
  if (cfg_.has_concat()) h = concat_channels(h, mt);
  Var<T> out;
  if (cfg_.use_conv_after_concat) {
    out = conv(activation(conv(h, "head.conv1"), Activation::selu), "head.conv2");
  } else {
    out = conv(h, "head.proj");
  }
  if (cfg_.residual_output) out = mtur::add(out, input);
  return {out, mt};
}

template Var<float> fuse(const Var<float>&, const Var<float>&);
template Var<double> fuse(const Var<double>&, const Var<double>&);
template class MTURModel<float>;
template class MTURModel<double>;
template MTURModel<float> MTURModel<float>::cast<float>() const;
template MTURModel<double> MTURModel<float>::cast<double>() const;
template MTURModel<float> MTURModel<double>::cast<float>() const;
template MTURModel<double> MTURModel<double>::cast<double>() const;

}  // namespace mtur::net
