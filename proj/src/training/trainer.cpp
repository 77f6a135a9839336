#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "mtur/error.hpp"
#include "mtur/rng.hpp"
#include "mtur/training.hpp"

namespace mtur::train {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kAugmentStream = 0x4155474dULL;

// Applies one of the 8 symmetries of the square (only the 4 flips when H != W)
// to every plane of sample n.
template <typename T>
void dihedral(Tensor<T>& t, std::size_t n, unsigned op) {
  const std::size_t C = t.dim(1), H = t.dim(2), W = t.dim(3);
  if (H != W) op &= 3u;
  std::vector<T> plane(H * W);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) plane[y * W + x] = t.at(n, c, y, x);
    }
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t sy = (op & 1u) ? H - 1 - y : y;
        std::size_t sx = (op & 2u) ? W - 1 - x : x;
        if (op & 4u) std::swap(sy, sx);
        t.at(n, c, y, x) = plane[sy * W + sx];
      }
    }
  }
}

template <typename T>
void augment(Batch<T>& b, std::uint64_t seed, std::size_t iteration) {
  Rng rng(derive_seed(derive_seed(seed, kAugmentStream), iteration));
  for (std::size_t n = 0; n < b.degraded.dim(0); ++n) {
    const auto op = static_cast<unsigned>(rng.below(8));
    dihedral(b.degraded, n, op);
    dihedral(b.reference, n, op);
    dihedral(b.mt_target, n, op);
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(seed, kShuffleStream), epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
[[noreturn]] void abort_training(const net::MTURModel<T>& model, const TrainConfig& cfg, std::size_t iteration,
                                 const std::vector<std::size_t>& indices, const std::vector<Sample>& dataset,
                                 const std::string& reason) {
  std::string where;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    const auto ckpt = cfg.output_dir / "last_good.mttb";
    net::save_checkpoint(model, ckpt);
    nlohmann::json ids = nlohmann::json::array();
    for (auto i : indices) ids.push_back(dataset[i].id);
    write_json(cfg.output_dir / "abort_batch.json",
               {{"iteration", iteration}, {"indices", indices}, {"ids", ids}, {"reason", reason}});
    where = "; last good weights in " + ckpt.string();
  }
  std::string list;
  for (auto i : indices) list += (list.empty() ? "" : ",") + std::to_string(i);
  throw NumericalError("training aborted at iteration " + std::to_string(iteration) + " (batch indices " + list +
                       "): " + reason + where);
}

}  // namespace

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (batch_size < 1) problems.emplace_back("batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) problems.emplace_back("lr must be finite and >= 0");
  if (!(lambda_mt >= 0.0) || !std::isfinite(lambda_mt)) problems.emplace_back("lambda_mt must be finite and >= 0");
  if (image_size < 1) problems.emplace_back("image_size must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid training configuration:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},         {"lr", c.lr},
                     {"iterations", c.iterations},         {"lambda_mt", c.lambda_mt},
                     {"seed", c.seed},                     {"checkpoint_every", c.checkpoint_every},
                     {"validate_every", c.validate_every}, {"log_every", c.log_every},
                     {"image_size", c.image_size},         {"augment", c.augment},
                     {"output_dir", c.output_dir.string()}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    TrainConfig d;
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lr = j.value("lr", d.lr);
    c.iterations = j.value("iterations", d.iterations);
    c.lambda_mt = j.value("lambda_mt", d.lambda_mt);
    c.seed = j.value("seed", d.seed);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.validate_every = j.value("validate_every", d.validate_every);
    c.log_every = j.value("log_every", d.log_every);
    c.image_size = j.value("image_size", d.image_size);
    c.augment = j.value("augment", d.augment);
    c.output_dir = j.value("output_dir", d.output_dir.string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training configuration: ") + e.what());
  }
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json val = nlohmann::json::array();
  for (const auto& v : validation) {
    val.push_back({{"iteration", v.iteration}, {"psnr", v.psnr}, {"ssim", v.ssim}, {"mt_mae", v.mt_mae}});
  }
  return {{"iterations", iterations}, {"loss", loss},
          {"iteration_ms", iteration_ms}, {"validation", std::move(val)},
          {"final_checkpoint", final_checkpoint}};
}

void TrainReport::write(const std::filesystem::path& path) const { write_json(path, to_json()); }

template <typename T>
Batch<T> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("make_batch: no indices");
  const auto& first = samples.at(indices[0]);
  const std::size_t n = indices.size(), h = first.degraded.height(), w = first.degraded.width();
  Batch<T> b{Tensor<T>(Shape{n, 3, h, w}), Tensor<T>(Shape{n, 3, h, w}), Tensor<T>(Shape{n, 1, h, w})};
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = samples.at(indices[k]);
    if (s.degraded.height() != h || s.degraded.width() != w) {
      throw DimensionError("make_batch: sample " + s.id + " is " + std::to_string(s.degraded.height()) + "x" +
                           std::to_string(s.degraded.width()) + ", batch is " + std::to_string(h) + "x" +
                           std::to_string(w));
    }
    write_into_batch(s.degraded, b.degraded, k);
    write_into_batch(s.reference, b.reference, k);
    write_into_batch(s.mt_target.values, b.mt_target, k);
  }
  return b;
}

template <typename T>
TrainReport train(net::MTURModel<T>& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const std::vector<Sample>* validation) {
  cfg.validate();
  if (dataset.size() < cfg.batch_size) {
    throw ConfigError("dataset has " + std::to_string(dataset.size()) + " samples, fewer than batch_size " +
                      std::to_string(cfg.batch_size));
  }
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);

  AdamState<T> adam;
  adam.lr = cfg.lr;
  TrainReport report;
  std::size_t epoch = 0, pos = 0;
  auto order = epoch_order(dataset.size(), cfg.seed, epoch);

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    if (pos + cfg.batch_size > dataset.size()) {
      order = epoch_order(dataset.size(), cfg.seed, ++epoch);
      pos = 0;
    }
    const std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                           order.begin() + static_cast<std::ptrdiff_t>(pos + cfg.batch_size));
    pos += cfg.batch_size;

    const auto start = std::chrono::steady_clock::now();
    auto batch = make_batch<T>(dataset, indices);
    if (cfg.augment) augment(batch, cfg.seed, it);
    auto out = model.forward(Var<T>::constant(std::move(batch.degraded)));
    auto loss = compute_loss(out.enhanced, Var<T>::constant(std::move(batch.reference)), out.mt,
                             Var<T>::constant(std::move(batch.mt_target)), cfg.lambda_mt);
    const double value = static_cast<double>(loss.value().item());
    if (!std::isfinite(value)) abort_training(model, cfg, it, indices, dataset, "loss is not finite");
    auto grads = backward(loss);
    try {
      adam_step(std::span<Parameter<T>>(model.parameters()), grads, adam);
    } catch (const NumericalError& e) {
      abort_training(model, cfg, it, indices, dataset, e.what());
    }
    const auto stop = std::chrono::steady_clock::now();

    report.iterations.push_back(it);
    report.loss.push_back(value);
    report.iteration_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    if (cfg.log_every && it % cfg.log_every == 0) {
      std::clog << "iter " << it << " loss " << value << "\n";
    }
    if (validation && !validation->empty() && cfg.validate_every && it % cfg.validate_every == 0) {
      auto v = evaluate_model(model, *validation);
      v.iteration = it;
      report.validation.push_back(v);
      if (cfg.log_every) std::clog << "iter " << it << " val psnr " << v.psnr << " ssim " << v.ssim << "\n";
    }
    if (!cfg.output_dir.empty() && cfg.checkpoint_every && it % cfg.checkpoint_every == 0) {
      net::save_checkpoint(model, cfg.output_dir / ("checkpoint_" + std::to_string(it) + ".mttb"));
    }
  }

  if (!cfg.output_dir.empty()) {
    const auto final_path = cfg.output_dir / "final.mttb";
    net::save_checkpoint(model, final_path);
    report.final_checkpoint = final_path.string();
    report.write(cfg.output_dir / "train_report.json");
  }
  return report;
}

template Batch<float> make_batch(const std::vector<Sample>&, const std::vector<std::size_t>&);
template Batch<double> make_batch(const std::vector<Sample>&, const std::vector<std::size_t>&);
template TrainReport train(net::MTURModel<float>&, const std::vector<Sample>&, const TrainConfig&,
                           const std::vector<Sample>*);
template TrainReport train(net::MTURModel<double>&, const std::vector<Sample>&, const TrainConfig&,
                           const std::vector<Sample>*);

}  // namespace mtur::train
