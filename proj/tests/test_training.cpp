#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "mtur/error.hpp"
#include "mtur/metrics.hpp"
#include "mtur/training.hpp"
#include "support.hpp"

using namespace mtur;
using namespace mtur::train;
using namespace mtur::testing;

namespace {

DatasetParams small_params(std::size_t size = 16) {
  DatasetParams p;
  p.image_size = size;
  p.physics.patch_radius = 2;
  return p;
}

net::MTURModel<double> tiny_model(std::uint64_t seed = 1) { return net::MTURModel<double>::build(net::MTURConfig::tiny(), seed); }

TrainConfig quick(std::size_t iterations) {
  TrainConfig c;
  c.batch_size = 2;
  c.iterations = iterations;
  c.image_size = 16;
  return c;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("deterministic, seed sensitive and independent of jobs") {
    auto p = small_params();
    const auto a = make_synthetic_dataset(6, p, 42);
    const auto b = make_synthetic_dataset(6, p, 42);
    p.jobs = 3;
    const auto c = make_synthetic_dataset(6, p, 42);
    const auto d = make_synthetic_dataset(6, small_params(), 43);
    CHECK(dataset_hash(a) == dataset_hash(b));
    CHECK(dataset_hash(a) == dataset_hash(c));
    CHECK(dataset_hash(a) != dataset_hash(d));
    // Sample i depends only on (seed, i).
    const auto longer = make_synthetic_dataset(8, small_params(), 42);
    CHECK(dataset_hash({a.begin(), a.begin() + 6}) == dataset_hash({longer.begin(), longer.begin() + 6}));
  }

  TEST_CASE("samples obey the contract") {
    const auto data = make_synthetic_dataset(4, small_params(24), 1);
    for (const auto& s : data) {
      CHECK(s.degraded.height() == 24);
      CHECK(s.reference.width() == 24);
      CHECK(s.mt_target.height() == 24);
      for (double v : s.mt_target.values.values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
      for (double v : s.degraded.pixels()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
    }
  }

  TEST_CASE("unit transmission leaves the scene untouched") {
    auto p = small_params();
    p.force_unit_transmission = true;
    p.mt_target = MtTarget::true_t;
    for (const auto& s : make_synthetic_dataset(3, p, 5)) {
      CHECK(s.degraded.pixels() == s.reference.pixels());
      for (double v : s.mt_target.values.values()) REQUIRE(v == 1.0);
    }
  }

  TEST_CASE("estimated targets match an independent recomputation") {
    const auto p = small_params();
    for (const auto& s : make_synthetic_dataset(4, p, 9)) {
      const auto a = physics::estimate_airlight(s.degraded, p.physics);
      const std::size_t r = p.physics.patch_radius;
      ImageGray ratio(s.degraded.height(), s.degraded.width());
      for (std::size_t y = 0; y < ratio.height(); ++y)
        for (std::size_t x = 0; x < ratio.width(); ++x)
          ratio.at(y, x) = std::min({s.degraded.at(y, x, 0) / a.r, s.degraded.at(y, x, 1) / a.g,
                                     s.degraded.at(y, x, 2) / a.b});
      const auto dark = min_filter_reference(ratio, r);
      for (std::size_t i = 0; i < dark.values().size(); ++i)
        REQUIRE(std::abs(s.mt_target.values.values()[i] - (1.0 - std::clamp(dark.values()[i], 0.0, 1.0))) < 1e-12);
    }
  }

  TEST_CASE("manifest round trip") {
    TempDir dir("dataset");
    const auto data = make_synthetic_dataset(3, small_params(), 2);
    write_dataset(data, dir.path(), true);
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    const auto back = read_dataset(dir / "manifest.json");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < data[i].degraded.pixels().size(); ++k)
        REQUIRE(std::abs(back[i].degraded.pixels()[k] - data[i].degraded.pixels()[k]) < 1e-6);
    }
    CHECK_THROWS_AS(read_dataset(dir / "nope.json"), IoError);
  }

  TEST_CASE("parameter validation") {
    auto p = small_params();
    p.airlight_r = {0.5, 0.1};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    CHECK_THROWS_AS(mt_target_from_string("guess"), ConfigError);
    CHECK(mt_target_from_string("true_t") == MtTarget::true_t);
    nlohmann::json j = small_params();
    CHECK(j.get<DatasetParams>().image_size == 16);
  }
}

TEST_SUITE("loss") {
  TEST_CASE("closed forms") {
    const auto x = Var<double>::constant(Tensor<double>(Shape{1, 3, 2, 2}, 0.5));
    const auto y = Var<double>::constant(Tensor<double>(Shape{1, 3, 2, 2}, 0.25));
    const auto m = Var<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, 0.9));
    const auto t = Var<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, 0.6));
    CHECK(compute_loss(x, x, m, m, 1.0).value().item() == 0.0);
    CHECK(compute_loss(x, y, m, t, 0.0).value().item() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(compute_loss(x, y, m, t, 2.0).value().item() == doctest::Approx(0.25 + 2 * 0.09).epsilon(1e-12));
    CHECK_THROWS_AS(compute_loss(x, y, m, t, -1.0), ConfigError);
    CHECK_THROWS_AS(compute_loss(x, y, t, t, std::nan("")), ConfigError);
  }

  TEST_CASE("random oracle and gradient") {
    auto e = Var<double>::leaf(random_tensor(Shape{2, 3, 4, 4}, 1), true);
    const auto r = random_tensor(Shape{2, 3, 4, 4}, 2);
    auto m = Var<double>::leaf(random_tensor(Shape{2, 1, 4, 4}, 3, 0, 1), true);
    const auto t = random_tensor(Shape{2, 1, 4, 4}, 4, 0, 1);
    double l1 = 0, l2 = 0;
    for (std::size_t i = 0; i < r.numel(); ++i) l1 += std::abs(e.value()[i] - r[i]) / static_cast<double>(r.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) l2 += std::pow(m.value()[i] - t[i], 2) / static_cast<double>(t.numel());
    const auto loss = compute_loss(e, Var<double>::constant(r), m, Var<double>::constant(t), 0.7);
    CHECK(loss.value().item() == doctest::Approx(l1 + 0.7 * l2).epsilon(1e-12));
    const auto g = grad_check({e, m}, [&] {
      return compute_loss(e, Var<double>::constant(r), m, Var<double>::constant(t), 0.7);
    });
    CHECK_MESSAGE(g.worst < 1e-6, g.where);
  }
}

TEST_SUITE("trainer") {
  TEST_CASE("lr = 0 leaves every parameter unchanged") {
    auto model = tiny_model();
    const auto before = model.clone();
    auto cfg = quick(3);
    cfg.lr = 0.0;
    const auto data = make_synthetic_dataset(4, small_params(), 1);
    const auto report = train::train(model, data, cfg);
    CHECK(report.loss.size() == 3);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      const auto& a = model.parameters()[i].var.value();
      const auto& b = before.parameters()[i].var.value();
      for (std::size_t k = 0; k < a.numel(); ++k) REQUIRE(a[k] == b[k]);
    }
  }

  TEST_CASE("one iteration moves both branches") {
    auto model = tiny_model();
    const auto before = model.clone();
    const auto data = make_synthetic_dataset(4, small_params(), 1);
    const auto report = train::train(model, data, quick(1));
    REQUIRE(report.loss.size() == 1);
    CHECK(std::isfinite(report.loss[0]));
    CHECK(report.iterations == std::vector<std::size_t>{1});
    for (auto n : {"mt.head.weight", "mt.enc2.conv.weight", "head.conv2.weight", "enh.drb5.conv1.weight"}) {
      CHECK_MESSAGE(max_abs_diff(model.param(n).value(), before.param(n).value()) > 0.0, n);
    }
  }

  TEST_CASE("loss curves repeat exactly for a fixed seed") {
    const auto data = make_synthetic_dataset(6, small_params(), 3);
    auto a = tiny_model(7), b = tiny_model(7);
    const auto ra = train::train(a, data, quick(4));
    const auto rb = train::train(b, data, quick(4));
    CHECK(ra.loss == rb.loss);
  }

  TEST_CASE("configuration checks") {
    auto model = tiny_model();
    const auto data = make_synthetic_dataset(2, small_params(), 1);
    auto cfg = quick(1);
    cfg.batch_size = 3;
    CHECK_THROWS_AS(train::train(model, data, cfg), ConfigError);
    cfg = quick(1);
    cfg.lr = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    nlohmann::json j = quick(5);
    CHECK(j.get<TrainConfig>().iterations == 5);
  }

  TEST_CASE("non-finite loss aborts with a dump") {
    TempDir dir("abort");
    auto model = tiny_model();
    const auto data = make_synthetic_dataset(2, small_params(), 1);
    for (auto& p : model.parameters())
      if (p.name == "head.conv2.bias") p.var.mutable_leaf_value()[0] = std::nan("");
    auto cfg = quick(1);
    cfg.output_dir = dir.path();
    CHECK_THROWS_AS(train::train(model, data, cfg), NumericalError);
    CHECK(std::filesystem::exists(dir / "last_good.mttb"));
    std::ifstream in(dir / "abort_batch.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("iteration") == 1);
    CHECK(j.at("indices").size() == 2);
  }

  TEST_CASE("outputs written when a directory is given") {
    TempDir dir("train_out");
    auto model = tiny_model();
    auto cfg = quick(2);
    cfg.output_dir = dir.path();
    cfg.checkpoint_every = 1;
    const auto data = make_synthetic_dataset(4, small_params(), 1);
    const auto report = train::train(model, data, cfg, &data);
    CHECK(std::filesystem::exists(dir / "checkpoint_1.mttb"));
    CHECK(std::filesystem::exists(dir / "final.mttb"));
    CHECK(std::filesystem::exists(dir / "train_report.json"));
    const auto back = net::load_checkpoint<double>(dir / "final.mttb");
    CHECK(max_abs_diff(back.param("head.conv2.weight").value(), model.param("head.conv2.weight").value()) == 0.0);
    CHECK(report.to_json().at("loss").size() == 2);
  }

  TEST_CASE("batches") {
    const auto data = make_synthetic_dataset(3, small_params(), 1);
    const auto b = make_batch<double>(data, {2, 0});
    CHECK(b.degraded.shape() == Shape{2, 3, 16, 16});
    CHECK(b.mt_target.shape() == Shape{2, 1, 16, 16});
    CHECK(b.reference.at(0, 1, 3, 4) == data[2].reference.at(3, 4, 1));
    CHECK_THROWS_AS(make_batch<double>(data, {}), UsageError);
  }
}

TEST_SUITE("inference") {
  TEST_CASE("shapes, range and determinism") {
    const auto model = tiny_model();
    const auto img = random_image(20, 28, 1);
    const auto a = infer(model, img);
    const auto b = infer(model, img);
    CHECK(a.enhanced.height() == 20);
    CHECK(a.enhanced.width() == 28);
    CHECK(a.mt.height() == 20);
    CHECK(a.enhanced.pixels() == b.enhanced.pixels());
    for (double v : a.enhanced.pixels()) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }

  TEST_CASE("evaluation against an oracle") {
    const auto model = tiny_model();
    const auto data = make_synthetic_dataset(3, small_params(), 4);
    const auto v = evaluate_model(model, data);
    double psnr = 0, mae = 0;
    for (const auto& s : data) {
      const auto r = infer(model, s.degraded);
      psnr += metrics::psnr(r.enhanced, s.reference) / 3;
      double e = 0;
      for (std::size_t i = 0; i < r.mt.values().size(); ++i)
        e += std::abs(r.mt.values()[i] - s.mt_target.values.values()[i]);
      mae += e / static_cast<double>(r.mt.values().size()) / 3;
    }
    CHECK(v.psnr == doctest::Approx(psnr).epsilon(1e-9));
    CHECK(v.mt_mae == doctest::Approx(mae).epsilon(1e-9));
  }
}

TEST_SUITE("bench") {
  TEST_CASE("nearest-rank percentile") {
    CHECK(percentile({5, 1, 4, 2, 3}, 50) == 3);
    CHECK(percentile({5, 1, 4, 2, 3}, 0) == 1);
    CHECK(percentile({5, 1, 4, 2, 3}, 100) == 5);
    CHECK(percentile({10, 20, 30, 40}, 95) == 40);
    CHECK(percentile({10, 20, 30, 40}, 25) == 10);
    CHECK_THROWS(percentile({}, 50));
    CHECK(percentile({1, 2}, 250) == 2);
  }

  TEST_CASE("timings are consistent") {
    const auto model = net::MTURModel<float>::build(net::MTURConfig::tiny(), 1);
    const auto r = fps_benchmark(model, 32, 1, 5);
    CHECK(r.runs == 5);
    CHECK(r.latencies_ms.size() == 5);
    CHECK(r.fps > 0);
    CHECK(r.p50_ms <= r.p95_ms);
    CHECK(r.consistency_error < 0.01);
    CHECK(r.fps == doctest::Approx(5 / r.wall_seconds).epsilon(1e-12));
    const auto j = r.to_json();
    for (auto k : {"fps", "p50_ms", "p95_ms", "mean_latency_ms", "image_size", "threads"}) CHECK(j.contains(k));
  }
}
