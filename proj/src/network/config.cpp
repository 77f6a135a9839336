#include <algorithm>
#include <sstream>

#include "mtur/error.hpp"
#include "mtur/network.hpp"

namespace mtur::net {

MTURConfig MTURConfig::tiny() {
  MTURConfig c;
  c.base_channels = 8;
  return c;
}

MTURConfig MTURConfig::variant(std::string_view name, MTURConfig base) {
  if (name == "full") return base;
  if (name == "basic") {
    base.use_mt_guidance = false;
  } else if (name == "no_skip") {
    base.use_skip_connection = false;
  } else if (name == "no_concat") {
    base.use_final_concat = false;
  } else if (name == "no_conv_after_concat") {
    base.use_conv_after_concat = false;
  } else {
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (expected full, basic, no_skip, no_concat, no_conv_after_concat)");
  }
  return base;
}

std::size_t MTURConfig::groups_for(std::size_t channels) const noexcept {
  return std::min(groups_gn, channels);
}

void MTURConfig::validate() const {
  std::vector<std::string> problems;
  if (base_channels < 1) problems.emplace_back("base_channels must be >= 1");
  if (drb_dilations.empty()) problems.emplace_back("drb_dilations must be nonempty");
  for (auto d : drb_dilations) {
    if (d < 1) problems.emplace_back("every drb dilation must be >= 1");
  }
  if (mt_encoder_blocks < 1) problems.emplace_back("mt_encoder_blocks must be >= 1");
  if (mt_encoder_blocks > 12) problems.emplace_back("mt_encoder_blocks must be <= 12");
  for (auto p : fusion_points) {
    if (p < 1 || p > drb_dilations.size()) {
      problems.emplace_back("fusion point " + std::to_string(p) + " outside [1, " +
                            std::to_string(drb_dilations.size()) + "]");
    }
  }
  {
    auto sorted = fusion_points;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      problems.emplace_back("fusion points must be distinct");
    }
  }
  if (groups_gn < 1) problems.emplace_back("groups_gn must be >= 1");
  if (base_channels >= 1 && groups_gn >= 1 && mt_encoder_blocks <= 12) {
    for (std::size_t i = 0; i <= mt_encoder_blocks; ++i) {
      const std::size_t c = base_channels << i;
      if (c % groups_for(c) != 0) {
        problems.emplace_back("group norm: " + std::to_string(c) + " channels not divisible by " +
                              std::to_string(groups_for(c)) + " groups");
        break;
      }
    }
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid MTURConfig:";
    for (const auto& p : problems) os << ' ' << p << ';';
    throw ConfigError(os.str());
  }
}

void to_json(nlohmann::json& j, const MTURConfig& c) {
  j = nlohmann::json{{"base_channels", c.base_channels},
                     {"drb_dilations", c.drb_dilations},
                     {"mt_encoder_blocks", c.mt_encoder_blocks},
                     {"fusion_points", c.fusion_points},
                     {"groups_gn", c.groups_gn},
                     {"use_mt_guidance", c.use_mt_guidance},
                     {"use_skip_connection", c.use_skip_connection},
                     {"use_final_concat", c.use_final_concat},
                     {"use_conv_after_concat", c.use_conv_after_concat},
                     {"residual_output", c.residual_output},
                     {"zero_init_residual", c.zero_init_residual}};
}

void from_json(const nlohmann::json& j, MTURConfig& c) {
  try {
    MTURConfig d;
    c.base_channels = j.value("base_channels", d.base_channels);
    c.drb_dilations = j.value("drb_dilations", d.drb_dilations);
    c.mt_encoder_blocks = j.value("mt_encoder_blocks", d.mt_encoder_blocks);
    c.fusion_points = j.value("fusion_points", d.fusion_points);
    c.groups_gn = j.value("groups_gn", d.groups_gn);
    c.use_mt_guidance = j.value("use_mt_guidance", d.use_mt_guidance);
    c.use_skip_connection = j.value("use_skip_connection", d.use_skip_connection);
    c.use_final_concat = j.value("use_final_concat", d.use_final_concat);
    c.use_conv_after_concat = j.value("use_conv_after_concat", d.use_conv_after_concat);
    c.residual_output = j.value("residual_output", d.residual_output);
    c.zero_init_residual = j.value("zero_init_residual", d.zero_init_residual);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("MTURConfig JSON: ") + e.what());
  }
}

std::size_t expected_parameter_count(const MTURConfig& cfg) {
  cfg.validate();
  const std::size_t C = cfg.base_channels, E = cfg.mt_encoder_blocks, Ce = cfg.enhancement_channels();
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; };
  std::size_t n = conv(3, C, 3) + 2 * C;  // stem conv + GN
  for (std::size_t i = 1; i <= E; ++i) {
    const std::size_t cin = C << (i - 1), cout = C << i;
    n += conv(cin, cout, 3) + 2 * cout;  // encoder stage
    n += conv(cout, cin, 3) + 2 * cin;   // mirrored decoder stage
  }
  n += conv(C, 1, 1);                                  // MT head
  n += conv(C, Ce, 3);                                 // enhancement entry
  n += cfg.drb_dilations.size() * 2 * conv(Ce, Ce, 3);  // DRB stack
  if (cfg.has_laterals()) n += cfg.fusion_points.size() * conv(2 * C, Ce, 1);
  n += conv(Ce, C, 1);  // reduce before upsampling
  const std::size_t head_in = C + (cfg.has_concat() ? 1 : 0);
  n += cfg.use_conv_after_concat ? conv(head_in, C, 3) + conv(C, 3, 3) : conv(head_in, 3, 1);
  return n;
}

}  // namespace mtur::net
