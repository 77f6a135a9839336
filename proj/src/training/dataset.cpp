#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "mtur/error.hpp"
#include "mtur/parallel.hpp"
#include "mtur/rng.hpp"
#include "mtur/training.hpp"

namespace mtur::train {
namespace {

// Surface colours follow natural-image statistics: almost every colour has
// one channel close to zero (the dark-channel observation).
std::array<double, 3> random_color(Rng& rng) {
  std::array<double, 3> c{rng.uniform(), rng.uniform(), rng.uniform()};
  const double lo = std::min({c[0], c[1], c[2]}) * rng.uniform(0.7, 1.0);
  for (auto& v : c) v -= lo;
  return c;
}

void check_range(const std::array<double, 2>& r, double lo, double hi, const char* what,
                 std::vector<std::string>& problems) {
  if (!(r[0] >= lo && r[0] <= r[1] && r[1] <= hi)) {
    problems.push_back(std::string(what) + " range must satisfy " + std::to_string(lo) + " <= lo <= hi <= " +
                       std::to_string(hi));
  }
}

ImageRGB random_crop(const ImageRGB& src, std::size_t size, Rng& rng) {
  const std::size_t side = std::min(src.height(), src.width());
  const std::size_t y0 = static_cast<std::size_t>(rng.below(src.height() - side + 1));
  const std::size_t x0 = static_cast<std::size_t>(rng.below(src.width() - side + 1));
  return resize(crop(src, y0, x0, side, side), size, size);
}

Sample make_sample(std::size_t index, const DatasetParams& p, std::uint64_t seed, const std::vector<ImageRGB>& clean) {
  Rng rng(derive_seed(seed, index));
  Sample s;
  char id[32];
  std::snprintf(id, sizeof id, "%06zu", index);
  s.id = id;
  const std::uint64_t scene_seed = rng.next();
  if (clean.empty()) {
    s.reference = procedural_scene(p.image_size, scene_seed);
  } else {
    Rng crop_rng(scene_seed);
    s.reference = random_crop(clean[index % clean.size()], p.image_size, crop_rng);
  }

  physics::Airlight a{rng.uniform(p.airlight_r[0], p.airlight_r[1]), rng.uniform(p.airlight_gb[0], p.airlight_gb[1]),
                      rng.uniform(p.airlight_gb[0], p.airlight_gb[1])};
  const std::array<double, 3> beta{rng.uniform(p.attenuation.r[0], p.attenuation.r[1]),
                                   rng.uniform(p.attenuation.g[0], p.attenuation.g[1]),
                                   rng.uniform(p.attenuation.b[0], p.attenuation.b[1])};
  const auto style = rng.below(2) == 0 ? physics::DepthStyle::linear_ramp : physics::DepthStyle::perlin;
  const std::uint64_t depth_seed = rng.next();

  const std::size_t n = p.image_size;
  std::array<physics::TransmissionMap, 3> t;
  if (p.force_unit_transmission) {
    for (auto& m : t) m = physics::TransmissionMap{ImageGray(n, n, 1.0), physics::MapRole::true_t};
  } else {
    t = physics::synth_transmission_rgb(n, n, depth_seed, beta, style, p.d_max);
  }
  s.degraded = physics::degrade(s.reference, t, a);

  if (p.mt_target == MtTarget::estimated) {
    const auto a_hat = physics::estimate_airlight(s.degraded, p.physics);
    s.mt_target = physics::estimate_mt(s.degraded, a_hat, p.physics.patch_radius);
  } else {
    ImageGray mean(n, n);
    for (std::size_t i = 0; i < mean.values().size(); ++i) {
      mean.values()[i] = (t[0].values.values()[i] + t[1].values.values()[i] + t[2].values.values()[i]) / 3.0;
    }
    s.mt_target = physics::TransmissionMap{std::move(mean), physics::MapRole::true_t};
  }
  return s;
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

const char* to_string(MtTarget m) noexcept { return m == MtTarget::estimated ? "estimated" : "true_t"; }

MtTarget mt_target_from_string(std::string_view name) {
  if (name == "estimated") return MtTarget::estimated;
  if (name == "true_t" || name == "true") return MtTarget::true_t;
  throw ConfigError("unknown mt target '" + std::string(name) + "' (expected estimated or true_t)");
}

void DatasetParams::validate() const {
  std::vector<std::string> problems;
  if (image_size < 1) problems.emplace_back("image_size must be >= 1");
  check_range(airlight_r, physics::kAirlightFloor, 1.0, "airlight_r", problems);
  check_range(airlight_gb, physics::kAirlightFloor, 1.0, "airlight_gb", problems);
  check_range(attenuation.r, 0.0, 1e3, "beta_r", problems);
  check_range(attenuation.g, 0.0, 1e3, "beta_g", problems);
  check_range(attenuation.b, 0.0, 1e3, "beta_b", problems);
  if (!(d_max >= 0.0) || !std::isfinite(d_max)) problems.emplace_back("d_max must be finite and >= 0");
  if (!problems.empty()) {
    std::string msg = "invalid dataset parameters:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
  physics.validate();
}

void to_json(nlohmann::json& j, const DatasetParams& p) {
  j = nlohmann::json{{"image_size", p.image_size},
                     {"mt_target", to_string(p.mt_target)},
                     {"patch_radius", p.physics.patch_radius},
                     {"airlight_quantile", p.physics.airlight_quantile},
                     {"t0", p.physics.t0},
                     {"beta_r", p.attenuation.r},
                     {"beta_g", p.attenuation.g},
                     {"beta_b", p.attenuation.b},
                     {"airlight_r", p.airlight_r},
                     {"airlight_gb", p.airlight_gb},
                     {"d_max", p.d_max},
                     {"force_unit_transmission", p.force_unit_transmission}};
}

void from_json(const nlohmann::json& j, DatasetParams& p) {
  try {
    DatasetParams d;
    p.image_size = j.value("image_size", d.image_size);
    p.mt_target = mt_target_from_string(j.value("mt_target", std::string(to_string(d.mt_target))));
    p.physics.patch_radius = j.value("patch_radius", d.physics.patch_radius);
    p.physics.airlight_quantile = j.value("airlight_quantile", d.physics.airlight_quantile);
    p.physics.t0 = j.value("t0", d.physics.t0);
    p.attenuation.r = j.value("beta_r", d.attenuation.r);
    p.attenuation.g = j.value("beta_g", d.attenuation.g);
    p.attenuation.b = j.value("beta_b", d.attenuation.b);
    p.airlight_r = j.value("airlight_r", d.airlight_r);
    p.airlight_gb = j.value("airlight_gb", d.airlight_gb);
    p.d_max = j.value("d_max", d.d_max);
    p.force_unit_transmission = j.value("force_unit_transmission", d.force_unit_transmission);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset parameters: ") + e.what());
  }
}

ImageRGB procedural_scene(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const double n = static_cast<double>(size);
  ImageRGB img(size, size);

  // Background: two-colour linear gradient.
  const auto c0 = random_color(rng), c1 = random_color(rng);
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  const double gx = std::cos(angle), gy = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = 0.5 + ((static_cast<double>(x) / n - 0.5) * gx + (static_cast<double>(y) / n - 0.5) * gy);
      const double w = std::clamp(u, 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = (1 - w) * c0[c] + w * c1[c];
    }
  }

  // Discs, boxes and striped boxes.
  const std::size_t shapes = 4 + rng.below(6);
  for (std::size_t s = 0; s < shapes; ++s) {
    const auto col = random_color(rng);
    const double cx = rng.uniform(0, n), cy = rng.uniform(0, n);
    const double rx = rng.uniform(0.05, 0.3) * n, ry = rng.uniform(0.05, 0.3) * n;
    const auto kind = rng.below(3);
    const double freq = rng.uniform(0.2, 1.2), phase = rng.uniform(0, 2 * M_PI);
    const auto col2 = random_color(rng);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = (static_cast<double>(x) - cx) / rx, dy = (static_cast<double>(y) - cy) / ry;
        const bool inside = kind == 0 ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        if (kind == 2) {
          const double w = 0.5 + 0.5 * std::sin(freq * static_cast<double>(x + y) + phase);
          for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = (1 - w) * col[c] + w * col2[c];
        } else {
          for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
        }
      }
    }
  }

  // Fine texture.
  const double amp = rng.uniform(0.0, 0.04);
  for (auto& v : img.pixels()) v += amp * (2 * rng.uniform() - 1);
  img.clamp();
  return img;
}

std::vector<Sample> make_synthetic_dataset(std::size_t n, const DatasetParams& params, std::uint64_t seed,
                                           const std::vector<ImageRGB>& clean) {
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  params.validate();
  for (const auto& c : clean) {
    if (c.height() == 0 || c.width() == 0) throw ConfigError("clean source contains an empty image");
  }
  std::vector<Sample> out(n);
  parallel_for(n, params.jobs, [&](std::size_t i) { out[i] = make_sample(i, params, seed, clean); });
  return out;
}

std::string dataset_hash(const std::vector<Sample>& samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : samples) {
    hash_bytes(h, s.id.data(), s.id.size());
    hash_bytes(h, s.degraded.pixels().data(), s.degraded.pixels().size() * sizeof(double));
    hash_bytes(h, s.reference.pixels().data(), s.reference.pixels().size() * sizeof(double));
    hash_bytes(h, s.mt_target.values.values().data(), s.mt_target.values.values().size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir, bool lossless) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::string ext = lossless ? ".mttb" : ".png";
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& s : samples) {
    const std::string deg = "degraded_" + s.id + ext, ref = "reference_" + s.id + ext, mt = "mt_" + s.id + ".mttb";
    save_image(s.degraded, dir / deg);
    save_image(s.reference, dir / ref);
    save_image(s.mt_target.values, dir / mt);
    manifest.push_back({{"degraded_path", deg}, {"reference_path", ref}, {"mt_path", mt}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

std::vector<Sample> read_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest.string() + ": " + e.what());
  }
  if (!j.is_array() || j.empty()) throw ConfigError(manifest.string() + ": expected a nonempty list of samples");
  const auto base = manifest.parent_path();
  std::vector<Sample> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.contains("degraded_path") || !e.contains("reference_path") || !e.contains("mt_path")) {
      throw ConfigError(manifest.string() + ": entry " + std::to_string(i) +
                        " needs degraded_path, reference_path and mt_path");
    }
    auto resolve = [&](const char* key) {
      std::filesystem::path p = e[key].get<std::string>();
      return p.is_absolute() ? p : base / p;
    };
    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", i);
    s.id = id;
    s.degraded = load_image(resolve("degraded_path"));
    s.reference = load_image(resolve("reference_path"));
    s.mt_target = physics::TransmissionMap{load_gray(resolve("mt_path")), physics::MapRole::estimated};
    if (s.degraded.height() != s.reference.height() || s.degraded.width() != s.reference.width() ||
        s.mt_target.height() != s.degraded.height() || s.mt_target.width() != s.degraded.width()) {
      throw DimensionError(manifest.string() + ": entry " + std::to_string(i) + " has mismatched sizes");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mtur::train
