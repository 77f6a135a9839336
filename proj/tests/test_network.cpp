#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "mtur/error.hpp"
#include "mtur/network.hpp"
#include "support.hpp"

using namespace mtur;
using namespace mtur::net;
using namespace mtur::testing;

namespace {

Var<double> input_var(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  return Var<double>::constant(random_tensor(Shape{n, 3, h, w}, seed, 0.0, 1.0));
}

bool same_values(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults and presets validate") {
    CHECK_NOTHROW(MTURConfig{}.validate());
    CHECK_NOTHROW(MTURConfig::tiny().validate());
    CHECK(MTURConfig::tiny().base_channels == 8);
    CHECK(MTURConfig{}.drb_dilations.size() == 10);
    for (auto v : {"full", "basic", "no_skip", "no_concat", "no_conv_after_concat"})
      CHECK_NOTHROW(MTURConfig::variant(v, MTURConfig::tiny()).validate());
    CHECK_THROWS_AS(MTURConfig::variant("nope", MTURConfig{}), ConfigError);
  }

  TEST_CASE("violations are reported") {
    auto bad = [](auto mutate) {
      MTURConfig c = MTURConfig::tiny();
      mutate(c);
      CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    bad([](MTURConfig& c) { c.base_channels = 0; });
    bad([](MTURConfig& c) { c.drb_dilations.clear(); });
    bad([](MTURConfig& c) { c.drb_dilations[3] = 0; });
    bad([](MTURConfig& c) { c.fusion_points = {0}; });
    bad([](MTURConfig& c) { c.fusion_points = {11}; });
    bad([](MTURConfig& c) { c.fusion_points = {4, 4}; });
    bad([](MTURConfig& c) { c.groups_gn = 3; });
    bad([](MTURConfig& c) { c.mt_encoder_blocks = 0; });
  }

  TEST_CASE("json round trip") {
    auto c = MTURConfig::variant("no_skip", MTURConfig::tiny());
    c.zero_init_residual = true;
    nlohmann::json j = c;
    CHECK(j.get<MTURConfig>() == c);
    CHECK_THROWS_AS((nlohmann::json{{"base_channels", "eight"}}.get<MTURConfig>()), ConfigError);
  }
}

TEST_SUITE("parameters") {
  TEST_CASE("tiny preset count matches a hand tally") {
    // C = 8, enhancement width 16, four encoder/decoder stages, ten DRBs,
    // two laterals, head input C + 1.
    const std::size_t stem = 3 * 8 * 9 + 8 + 2 * 8;
    std::size_t stages = 0;
    for (std::size_t cin : {8, 16, 32, 64}) {
      const std::size_t cout = 2 * cin;
      stages += (cin * cout * 9 + cout + 2 * cout) + (cout * cin * 9 + cin + 2 * cin);
    }
    const std::size_t mt_head = 8 + 1;
    const std::size_t entry = 8 * 16 * 9 + 16;
    const std::size_t drbs = 10 * 2 * (16 * 16 * 9 + 16);
    const std::size_t laterals = 2 * (16 * 16 + 16);
    const std::size_t reduce = 16 * 8 + 8;
    const std::size_t head = (9 * 8 * 9 + 8) + (8 * 3 * 9 + 3);
    const std::size_t total = stem + stages + mt_head + entry + drbs + laterals + reduce + head;
    CHECK(total == 246292);

    const auto model = MTURModel<double>::build(MTURConfig::tiny(), 1);
    CHECK(model.parameter_count() == total);
    CHECK(expected_parameter_count(MTURConfig::tiny()) == total);

    // basic: no laterals, head input loses the MT channel.
    const auto basic = MTURConfig::variant("basic", MTURConfig::tiny());
    CHECK(MTURModel<double>::build(basic, 1).parameter_count() == total - laterals - 8 * 9);
    // no_conv_after_concat: both 3x3 head convs become one 1x1 projection.
    const auto proj = MTURConfig::variant("no_conv_after_concat", MTURConfig::tiny());
    CHECK(MTURModel<double>::build(proj, 1).parameter_count() == total - head + (9 * 3 + 3));
  }

  TEST_CASE("count formula agrees with construction for every variant") {
    for (auto v : {"full", "basic", "no_skip", "no_concat", "no_conv_after_concat"}) {
      const auto cfg = MTURConfig::variant(v, MTURConfig::tiny());
      CHECK(MTURModel<float>::build(cfg, 3).parameter_count() == expected_parameter_count(cfg));
    }
  }

  TEST_CASE("names follow the ablation flags") {
    const auto full = MTURModel<double>::build(MTURConfig::tiny(), 1);
    for (auto n : {"stem.conv.weight", "stem.gn.gamma", "mt.enc4.conv.weight", "mt.dec1.gn.beta", "mt.head.bias",
                   "enh.entry.weight", "enh.drb10.conv2.weight", "enh.lateral4.weight", "enh.lateral8.bias",
                   "enh.reduce.weight", "head.conv1.weight", "head.conv2.bias"})
      CHECK_MESSAGE(full.has_param(n), n);
    CHECK_FALSE(full.has_param("head.proj.weight"));
    CHECK_THROWS_AS(full.param("nope"), UsageError);

    const auto basic = MTURModel<double>::build(MTURConfig::variant("basic", MTURConfig::tiny()), 1);
    CHECK_FALSE(basic.has_param("enh.lateral4.weight"));
    CHECK(basic.param("head.conv1.weight").shape() == Shape{8, 8, 3, 3});
    const auto no_skip = MTURModel<double>::build(MTURConfig::variant("no_skip", MTURConfig::tiny()), 1);
    CHECK_FALSE(no_skip.has_param("enh.lateral8.weight"));
    const auto no_concat = MTURModel<double>::build(MTURConfig::variant("no_concat", MTURConfig::tiny()), 1);
    CHECK(no_concat.param("head.conv1.weight").shape() == Shape{8, 8, 3, 3});
    const auto proj = MTURModel<double>::build(MTURConfig::variant("no_conv_after_concat", MTURConfig::tiny()), 1);
    CHECK(proj.has_param("head.proj.weight"));
    CHECK_FALSE(proj.has_param("head.conv1.weight"));
  }

  TEST_CASE("initialization is seeded per name") {
    const auto a = MTURModel<double>::build(MTURConfig::tiny(), 5);
    const auto b = MTURModel<double>::build(MTURConfig::tiny(), 5);
    const auto c = MTURModel<double>::build(MTURConfig::tiny(), 6);
    const auto basic = MTURModel<double>::build(MTURConfig::variant("basic", MTURConfig::tiny()), 5);
    const auto& wa = a.param("enh.drb3.conv1.weight").value();
    CHECK(same_values(wa, b.param("enh.drb3.conv1.weight").value()));
    CHECK_FALSE(same_values(wa, c.param("enh.drb3.conv1.weight").value()));
    CHECK(same_values(wa, basic.param("enh.drb3.conv1.weight").value()));
    const auto& gamma = a.param("stem.gn.gamma").value();
    for (std::size_t i = 0; i < gamma.numel(); ++i) CHECK(gamma[i] == 1.0);
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("boundary laws are exact") {
    const auto o = Var<double>::constant(random_tensor(Shape{2, 5, 4, 3}, 1, -3.0, 3.0));
    const auto zero = Var<double>::constant(Tensor<double>(Shape{2, 1, 4, 3}, 0.0));
    const auto one = Var<double>::constant(Tensor<double>(Shape{2, 1, 4, 3}, 1.0));
    const auto f0 = fuse(o, zero);
    const auto f1 = fuse(o, one);
    const auto& ov = o.value();
    const auto& v0 = f0.value();
    const auto& v1 = f1.value();
    for (std::size_t i = 0; i < ov.numel(); ++i) {
      CHECK(v0[i] == ov[i]);
      CHECK(v1[i] == 2 * ov[i]);
    }
    const auto half = fuse(Var<double>::constant(Tensor<double>(Shape{1, 2, 1, 1}, 0.5)),
                           Var<double>::constant(Tensor<double>(Shape{1, 1, 1, 1}, 0.5)));
    CHECK(half.value()[0] == 0.75);
  }

  TEST_CASE("shape errors") {
    const auto o = Var<double>::constant(Tensor<double>(Shape{1, 4, 4, 4}));
    CHECK_THROWS_AS(fuse(o, Var<double>::constant(Tensor<double>(Shape{1, 2, 4, 4}))), DimensionError);
    CHECK_THROWS_AS(fuse(o, Var<double>::constant(Tensor<double>(Shape{1, 1, 4, 3}))), DimensionError);
  }

  TEST_CASE("gradient") {
    auto o = Var<double>::leaf(random_tensor(Shape{1, 3, 3, 3}, 2), true);
    auto t = Var<double>::leaf(random_tensor(Shape{1, 1, 3, 3}, 3, 0.0, 1.0), true);
    const auto r = grad_check({o, t}, [&] { return project(fuse(o, t), 4); });
    CHECK_MESSAGE(r.worst < 1e-6, r.where);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("shape contract") {
    const auto model = MTURModel<double>::build(MTURConfig::tiny(), 1);
    for (std::size_t s : {64, 96}) {
      const auto out = model.forward(input_var(2, s, s, 2));
      CHECK(out.enhanced.shape() == Shape{2, 3, s, s});
      CHECK(out.mt.shape() == Shape{2, 1, s, s});
      const auto& mt = out.mt.value();
      for (std::size_t i = 0; i < mt.numel(); ++i) {
        REQUIRE(mt[i] > 0.0);
        REQUIRE(mt[i] < 1.0);
      }
    }
    const auto odd = model.forward(input_var(1, 37, 23, 3));
    CHECK(odd.enhanced.shape() == Shape{1, 3, 37, 23});
    CHECK(odd.mt.shape() == Shape{1, 1, 37, 23});
    CHECK_THROWS_AS(model.forward(Var<double>::constant(Tensor<double>(Shape{1, 4, 8, 8}))), DimensionError);
    CHECK_THROWS_AS(model.forward(Var<double>::constant(Tensor<double>(Shape{3, 8, 8}))), DimensionError);
  }

  TEST_CASE("deterministic and batch independent") {
    const auto model = MTURModel<double>::build(MTURConfig::tiny(), 1);
    const auto x = input_var(2, 32, 32, 5);
    const auto a = model.forward(x);
    const auto b = model.forward(x);
    CHECK(same_values(a.enhanced.value(), b.enhanced.value()));
    Tensor<double> first(Shape{1, 3, 32, 32});
    for (std::size_t i = 0; i < first.numel(); ++i) first[i] = x.value()[i];
    const auto x0 = Var<double>::constant(first);
    const auto single = model.forward(x0);
    const auto& sv = single.enhanced.value();
    const auto& av = a.enhanced.value();
    double m = 0;
    for (std::size_t i = 0; i < sv.numel(); ++i) m = std::max(m, std::abs(sv[i] - av[i]));
    CHECK(m < 1e-12);
  }

  TEST_CASE("guidance affects the enhanced output and variants differ") {
    const auto x = input_var(1, 32, 32, 6);
    const auto full = MTURModel<double>::build(MTURConfig::tiny(), 1);
    const auto ref = full.forward(x);
    for (auto v : {"basic", "no_skip", "no_concat", "no_conv_after_concat"}) {
      const auto m = MTURModel<double>::build(MTURConfig::variant(v, MTURConfig::tiny()), 1);
      CHECK_MESSAGE(max_abs_diff(m.forward(x).enhanced.value(), ref.enhanced.value()) > 1e-6, v);
    }
    // Perturbing only the MT head moves the enhanced output in the full model.
    auto guided = full.clone();
    for (auto& p : guided.parameters())
      if (p.name == "mt.head.bias") p.var.mutable_leaf_value()[0] += 1.0;
    CHECK(max_abs_diff(guided.forward(x).enhanced.value(), ref.enhanced.value()) > 1e-6);
    auto unguided = MTURModel<double>::build(MTURConfig::variant("basic", MTURConfig::tiny()), 1);
    const auto base = unguided.forward(x);
    for (auto& p : unguided.parameters())
      if (p.name == "mt.head.bias") p.var.mutable_leaf_value()[0] += 1.0;
    CHECK(same_values(unguided.forward(x).enhanced.value(), base.enhanced.value()));
  }

  TEST_CASE("zero-initialized residual blocks are the identity") {
    auto cfg = MTURConfig::tiny();
    cfg.zero_init_residual = true;
    const auto model = MTURModel<double>::build(cfg, 1);
    const auto s = Var<double>::constant(random_tensor(Shape{1, 16, 12, 12}, 7));
    CHECK(same_values(model.drb_stack(s, 10).value(), s.value()));
    CHECK_THROWS_AS(model.drb_stack(s, 11), UsageError);
  }

  TEST_CASE("cast and clone") {
    const auto model = MTURModel<double>::build(MTURConfig::tiny(), 1);
    const auto f = model.cast<float>();
    CHECK(f.parameter_count() == model.parameter_count());
    const auto x = input_var(1, 16, 16, 8);
    const auto yd = model.forward(x).enhanced.value();
    const auto yf = f.forward(Var<float>::constant(x.value().cast<float>())).enhanced.value();
    double m = 0;
    for (std::size_t i = 0; i < yd.numel(); ++i) m = std::max(m, std::abs(yd[i] - static_cast<double>(yf[i])));
    CHECK(m < 1e-4);
    auto c = model.clone();
    c.parameters()[0].var.mutable_leaf_value()[0] += 1.0;
    CHECK(c.parameters()[0].var.value()[0] != model.parameters()[0].var.value()[0]);
  }
}

TEST_SUITE("describe") {
  TEST_CASE("receptive field grows with dilation") {
    const std::vector<std::size_t> d{1, 1, 2, 2, 4, 8, 4, 2, 2, 1};
    CHECK(drb_receptive_field(d) == 1 + 4 * 27);
    const auto s = describe(MTURConfig::tiny(), 64, 64);
    CHECK(s.drb_dilations == d);
    REQUIRE(s.drb_receptive_field.size() == 10);
    for (std::size_t i = 1; i < 10; ++i) CHECK(s.drb_receptive_field[i] > s.drb_receptive_field[i - 1]);
    CHECK(s.drb_receptive_field.back() == drb_receptive_field(d));
    CHECK(s.parameter_count == 246292);
    CHECK(s.to_text().find("drb dilations: 1 1 2 2 4 8 4 2 2 1") != std::string::npos);
    CHECK(s.to_json().at("layers").size() == s.layers.size());
  }

  TEST_CASE("receptive field matches the gradient footprint") {
    // One output pixel of a DRB chain depends on exactly rf x rf inputs.
    auto cfg = MTURConfig::tiny();
    cfg.drb_dilations = {1, 2, 1};
    cfg.fusion_points = {1};
    const auto model = MTURModel<double>::build(cfg, 9);
    const std::size_t S = 33, c = S / 2;
    auto x = Var<double>::leaf(random_tensor(Shape{1, 16, S, S}, 10), true);
    const auto y = model.drb_stack(x, 3);
    Tensor<double> pick(y.shape(), 0.0);
    for (std::size_t ch = 0; ch < 16; ++ch) pick.at(0, ch, c, c) = 1.0;
    const auto grads = backward(sum(mul(y, Var<double>::constant(pick))));
    const auto* g = grads.find(x);
    REQUIRE(g != nullptr);
    std::size_t lo = S, hi = 0;
    for (std::size_t i = 0; i < S; ++i) {
      double row = 0;
      for (std::size_t ch = 0; ch < 16; ++ch)
        for (std::size_t j = 0; j < S; ++j) row += std::abs(g->at(0, ch, i, j));
      if (row > 0) {
        lo = std::min(lo, i);
        hi = std::max(hi, i);
      }
    }
    CHECK(hi - lo + 1 == drb_receptive_field(cfg.drb_dilations));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is exact") {
    TempDir dir("ckpt");
    auto cfg = MTURConfig::variant("no_concat", MTURConfig::tiny());
    const auto model = MTURModel<float>::build(cfg, 4);
    const auto path = dir / "m.mttb";
    save_checkpoint(model, path);
    CHECK(std::filesystem::exists(config_sidecar(path)));
    CHECK(config_sidecar(path).filename() == "m.json");
    const auto back = load_checkpoint<float>(path);
    CHECK(back.config() == cfg);
    REQUIRE(back.parameters().size() == model.parameters().size());
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      CHECK(back.parameters()[i].name == model.parameters()[i].name);
      const auto& a = back.parameters()[i].var.value();
      const auto& b = model.parameters()[i].var.value();
      for (std::size_t k = 0; k < a.numel(); ++k) REQUIRE(a[k] == b[k]);
    }
    // Saving twice gives identical bytes.
    const auto second = dir / "n.mttb";
    save_checkpoint(back, second);
    auto slurp = [](const std::filesystem::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(path) == slurp(second));
  }

  TEST_CASE("strict loading") {
    TempDir dir("ckpt_strict");
    const auto model = MTURModel<float>::build(MTURConfig::tiny(), 4);
    const auto path = dir / "m.mttb";
    save_checkpoint(model, path);

    auto other = MTURModel<float>::build(MTURConfig::variant("basic", MTURConfig::tiny()), 4);
    CHECK_THROWS_AS(assign_parameters(other, read_mttb(path)), ConfigError);

    std::filesystem::remove(config_sidecar(path));
    CHECK_THROWS_AS(load_checkpoint<float>(path), IoError);
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "absent.mttb"), IoError);
  }
}

TEST_CASE("network gradient check on a 1x3x16x16 input") {
  auto model = MTURModel<double>::build(MTURConfig::tiny(), 11);
  const auto x = input_var(1, 16, 16, 12);
  std::vector<Var<double>> leaves;
  for (auto& p : model.parameters()) leaves.push_back(p.var);
  const auto r = grad_check(
      leaves,
      [&] {
        const auto out = model.forward(x);
        return add(project(out.enhanced, 13), project(out.mt, 14));
      },
      1e-4, 3);
  CHECK(r.checked > 100);
  CHECK_MESSAGE(r.worst < 1e-3, r.where);
}
