#include <cmath>
#include <cstdio>
#include <sstream>

#include "mtur/error.hpp"
#include "mtur/metrics.hpp"

namespace mtur::metrics {
namespace {

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError(what + " is not finite");
}

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

MetricRecord evaluate(std::string id, const ImageRGB& restored, const ImageRGB* reference,
                      const UnderwaterConstants& k) {
  MetricRecord r;
  r.id = std::move(id);
  if (reference) {
    r.psnr = psnr(restored, *reference);
    r.ssim = ssim(restored, *reference);
  }
  r.uiqm = uiqm(restored, k);
  r.uciqe = uciqe(restored, k);
  return r;
}

void to_json(nlohmann::json& j, const MetricRecord& r) {
  j = nlohmann::json{{"id", r.id}, {"uiqm", r.uiqm}, {"uciqe", r.uciqe}};
  j["psnr"] = r.psnr ? nlohmann::json(*r.psnr) : nlohmann::json(nullptr);
  j["ssim"] = r.ssim ? nlohmann::json(*r.ssim) : nlohmann::json(nullptr);
  j["timing_ms"] = r.timing_ms ? nlohmann::json(*r.timing_ms) : nlohmann::json(nullptr);
}

void EvalReport::summarize() {
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : per_image) {
    if (r.psnr) values["psnr"].push_back(*r.psnr);
    if (r.ssim) values["ssim"].push_back(*r.ssim);
    values["uiqm"].push_back(r.uiqm);
    values["uciqe"].push_back(r.uciqe);
    if (r.timing_ms) values["timing_ms"].push_back(*r.timing_ms);
  }
  aggregate.clear();
  for (const auto& [name, v] : values) {
    Summary s;
    s.count = v.size();
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size()));
    aggregate.emplace(name, s);
  }
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& r : per_image) {
    require_finite(r.uiqm, r.id + " uiqm");
    require_finite(r.uciqe, r.id + " uciqe");
    if (r.psnr) require_finite(*r.psnr, r.id + " psnr");
    if (r.ssim) require_finite(*r.ssim, r.id + " ssim");
    images.push_back(r);
  }
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [name, s] : aggregate) agg[name] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
  return {{"config_hash", config_hash}, {"per_image", std::move(images)}, {"aggregate", std::move(agg)}};
}

std::string EvalReport::to_csv(const std::string& method) const {
  static const char* kOrder[] = {"psnr", "ssim", "uiqm", "uciqe", "timing_ms"};
  std::ostringstream head, row;
  head << "method";
  row << method;
  for (const char* name : kOrder) {
    auto it = aggregate.find(name);
    if (it == aggregate.end()) continue;
    head << ',' << name << "_mean," << name << "_std";
    row << ',' << format(it->second.mean) << ',' << format(it->second.std);
  }
  return head.str() + "\n" + row.str() + "\n";
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

}  // namespace mtur::metrics
