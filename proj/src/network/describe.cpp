#include <algorithm>
#include <iomanip>
#include <sstream>

#include "mtur/network.hpp"

namespace mtur::net {
namespace {

// Receptive-field composition along a chain: a layer with effective kernel
// k_eff = d (k - 1) + 1 grows the field by (k_eff - 1) * jump, and a stride
// multiplies the jump (input pixels per feature pixel).
struct Chain {
  std::size_t rf = 1, jump = 1;

  void conv(std::size_t k, std::size_t stride, std::size_t dilation) {
    rf += dilation * (k - 1) * jump;
    jump *= stride;
  }
};

}  // namespace

std::size_t drb_receptive_field(std::span<const std::size_t> dilations) {
  std::size_t rf = 1;
  for (auto d : dilations) rf += 4 * d;
  return rf;
}

ArchitectureSummary describe(const MTURConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  ArchitectureSummary s;
  s.input_height = height;
  s.input_width = width;
  s.drb_dilations = cfg.drb_dilations;
  s.parameter_count = expected_parameter_count(cfg);

  const std::size_t C = cfg.base_channels, E = cfg.mt_encoder_blocks, Ce = cfg.enhancement_channels();
  auto push = [&](std::string name, std::string kind, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
                  std::size_t stride, std::size_t dilation, std::size_t rf) {
    s.layers.push_back(LayerSummary{std::move(name), std::move(kind), c, h, w, k, stride, dilation, rf});
  };

  Chain stem;
  stem.conv(3, 2, 1);
  std::size_t h = conv_output_size(height, 2), w = conv_output_size(width, 2);
  push("stem", "conv3x3+gn+selu", C, h, w, 3, 2, 1, stem.rf);

  // MT branch. Decoder fields follow the deepest path, which dominates.
  std::vector<std::pair<std::size_t, std::size_t>> sizes{{h, w}};
  std::vector<std::size_t> jumps{stem.jump};
  Chain mt = stem;
  for (std::size_t i = 1; i <= E; ++i) {
    mt.conv(3, 2, 1);
    sizes.emplace_back(conv_output_size(sizes.back().first, 2), conv_output_size(sizes.back().second, 2));
    jumps.push_back(mt.jump);
    push("mt.enc" + std::to_string(i), "conv3x3+gn+selu", C << i, sizes[i].first, sizes[i].second, 3, 2, 1, mt.rf);
  }
  for (std::size_t i = E; i >= 1; --i) {
    mt.jump = jumps[i - 1];
    mt.conv(3, 1, 1);
    push("mt.dec" + std::to_string(i), "up+conv3x3+gn+selu+skip", C << (i - 1), sizes[i - 1].first,
         sizes[i - 1].second, 3, 1, 1, mt.rf);
  }
  push("mt.head", "conv1x1+sigmoid+bilinear", 1, height, width, 1, 1, 1, mt.rf);

  // Enhancement branch.
  Chain enh = stem;
  enh.conv(3, 2, 1);
  const std::size_t eh = conv_output_size(h, 2), ew = conv_output_size(w, 2);
  push("enh.entry", "conv3x3+relu", Ce, eh, ew, 3, 2, 1, enh.rf);
  std::size_t stream_rf = 1;
  for (std::size_t k = 1; k <= cfg.drb_dilations.size(); ++k) {
    const std::size_t d = cfg.drb_dilations[k - 1];
    enh.conv(3, 1, d);
    enh.conv(3, 1, d);
    stream_rf += 4 * d;
    s.drb_receptive_field.push_back(stream_rf);
    push("enh.drb" + std::to_string(k), "drb", Ce, eh, ew, 3, 1, d, enh.rf);
    if (cfg.has_laterals() &&
        std::find(cfg.fusion_points.begin(), cfg.fusion_points.end(), k) != cfg.fusion_points.end()) {
      push("enh.lateral" + std::to_string(k), "conv1x1+add", Ce, eh, ew, 1, 1, 1, enh.rf);
    }
  }
  if (cfg.has_fusion()) push("enh.fuse", "f=o+o*t", Ce, eh, ew, 1, 1, 1, enh.rf);
  push("enh.reduce", "conv1x1+bilinear", C, height, width, 1, 1, 1, enh.rf);
  if (cfg.has_concat()) push("head.concat", "concat", C + 1, height, width, 1, 1, 1, enh.rf);
  if (cfg.use_conv_after_concat) {
    enh.jump = 1;
    enh.conv(3, 1, 1);
    push("head.conv1", "conv3x3+relu", C, height, width, 3, 1, 1, enh.rf);
    enh.conv(3, 1, 1);
    push("head.conv2", "conv3x3", 3, height, width, 3, 1, 1, enh.rf);
  } else {
    push("head.proj", "conv1x1", 3, height, width, 1, 1, 1, enh.rf);
  }
  return s;
}

std::string ArchitectureSummary::to_text() const {
  std::ostringstream os;
  os << "input " << input_height << "x" << input_width << ", " << parameter_count << " parameters\n";
  os << std::left << std::setw(16) << "layer" << std::setw(26) << "kind" << std::setw(16) << "output"
     << std::setw(4) << "k" << std::setw(4) << "s" << std::setw(4) << "d" << "rf\n";
  for (const auto& l : layers) {
    std::ostringstream shape;
    shape << l.out_channels << "x" << l.out_height << "x" << l.out_width;
    os << std::setw(16) << l.name << std::setw(26) << l.kind << std::setw(16) << shape.str() << std::setw(4)
       << l.kernel << std::setw(4) << l.stride << std::setw(4) << l.dilation << l.receptive_field << "\n";
  }
  os << "drb dilations:";
  for (auto d : drb_dilations) os << ' ' << d;
  os << "\ndrb receptive field (stream px):";
  for (auto r : drb_receptive_field) os << ' ' << r;
  os << "\n";
  return os.str();
}

nlohmann::json ArchitectureSummary::to_json() const {
  nlohmann::json layers_json = nlohmann::json::array();
  for (const auto& l : layers) {
    layers_json.push_back({{"name", l.name},
                           {"kind", l.kind},
                           {"output", {l.out_channels, l.out_height, l.out_width}},
                           {"kernel", l.kernel},
                           {"stride", l.stride},
                           {"dilation", l.dilation},
                           {"receptive_field", l.receptive_field}});
  }
  return {{"input", {input_height, input_width}},
          {"parameter_count", parameter_count},
          {"drb_dilations", drb_dilations},
          {"drb_receptive_field", drb_receptive_field},
          {"layers", std::move(layers_json)}};
}

}  // namespace mtur::net
