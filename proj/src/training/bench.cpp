#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "mtur/error.hpp"
#include "mtur/rng.hpp"
#include "mtur/training.hpp"

namespace mtur::train {
namespace {

using Clock = std::chrono::steady_clock;

Tensor<float> bench_input(std::size_t size, std::uint64_t seed) {
  Tensor<float> x(Shape{1, 3, size, size});
  Rng rng(seed);
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
  return x;
}

}  // namespace

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw UsageError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
  return values[std::min(idx, values.size() - 1)];
}

nlohmann::json BenchResult::to_json() const {
  return {{"image_size", image_size},
          {"threads", threads},
          {"runs", runs},
          {"wall_seconds", wall_seconds},
          {"fps", fps},
          {"mean_latency_ms", mean_latency_ms},
          {"p50_ms", p50_ms},
          {"p95_ms", p95_ms},
          {"consistency_error", consistency_error},
          {"latencies_ms", latencies_ms}};
}

BenchResult fps_benchmark(const net::MTURModel<float>& model, std::size_t image_size, std::size_t warmup,
                          std::size_t runs, std::size_t threads) {
  if (runs < 3) throw ConfigError("bench: runs must be >= 3");
  if (image_size < 1) throw ConfigError("bench: image size must be >= 1");
  threads = std::clamp<std::size_t>(threads, 1, runs);

  const auto input = Var<float>::constant(bench_input(image_size, image_size));
  for (std::size_t i = 0; i < warmup; ++i) (void)model.forward(input);

  BenchResult r;
  r.image_size = image_size;
  r.threads = threads;
  r.runs = runs;
  r.latencies_ms.assign(runs, 0.0);
  std::vector<double> busy(threads, 0.0);

  auto worker = [&](std::size_t w) {
    for (std::size_t i = w; i < runs; i += threads) {
      const auto t0 = Clock::now();
      (void)model.forward(input);  // the temporary graph is freed inside the timed span
      const auto t1 = Clock::now();
      r.latencies_ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
      busy[w] += r.latencies_ms[i];
    }
  };

  const auto start = Clock::now();
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  r.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();

  r.fps = static_cast<double>(runs) / r.wall_seconds;
  double total = 0;
  for (double l : r.latencies_ms) total += l;
  r.mean_latency_ms = total / static_cast<double>(runs);
  r.p50_ms = percentile(r.latencies_ms, 50);
  r.p95_ms = percentile(r.latencies_ms, 95);
  const double reconstructed = *std::max_element(busy.begin(), busy.end()) / 1000.0;
  r.consistency_error = std::abs(r.wall_seconds - reconstructed) / r.wall_seconds;
  return r;
}

}  // namespace mtur::train
