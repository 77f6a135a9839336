#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mtur/error.hpp"
#include "mtur/metrics.hpp"
#include "metric_oracles.hpp"
#include "support.hpp"

using namespace mtur;
using namespace mtur::metrics;
using namespace mtur::testing;


namespace {

ImageRGB noisy(const ImageRGB& img, double amp, std::uint64_t seed) {
  Rng rng(seed);
  auto px = img.pixels();
  for (auto& v : px) v += rng.uniform(-amp, amp);
  return ImageRGB(img.height(), img.width(), std::move(px));
}

}  // namespace

TEST_SUITE("psnr") {
  TEST_CASE("closed forms") {
    const auto img = random_image(8, 8, 1);
    CHECK(psnr(img, img) == kPsnrCap);
    CHECK(psnr(ImageRGB(4, 4, 0.0), ImageRGB(4, 4, 1.0)) == 0.0);
    CHECK(psnr(ImageRGB(4, 4, 0.3), ImageRGB(4, 4, 0.4)) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_THROWS_AS(psnr(img, random_image(8, 7, 2)), DimensionError);
  }

  TEST_CASE("oracle, symmetry and monotonicity") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto a = random_image(64, 64, 10 + s), b = random_image(64, 64, 40 + s);
      CHECK(rel_diff(psnr(a, b), oracle::psnr(a, b)) < 1e-6);
      CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-9));
    }
    const auto ref = textured_image(32, 32, 3);
    double prev = 1e9;
    for (double amp : {0.01, 0.05, 0.2}) {
      const double p = psnr(noisy(ref, amp, 4), ref);
      CHECK(p < prev);
      prev = p;
    }
  }
}

TEST_SUITE("ssim") {
  TEST_CASE("closed forms") {
    const auto img = random_image(16, 16, 5);
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
    const double c1 = 1e-4;
    CHECK(ssim(ImageRGB(16, 16, 0.0), ImageRGB(16, 16, 1.0)) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-9));
    CHECK_THROWS_AS(ssim(ImageRGB(10, 20, 0.5), ImageRGB(10, 20, 0.5)), DimensionError);
  }

  TEST_CASE("window taps") {
    const auto taps = gaussian_window(11, 1.5);
    double s = 0;
    for (double t : taps) s += t;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(taps[5] / taps[4] == doctest::Approx(std::exp(1.0 / 4.5)).epsilon(1e-12));
    CHECK(taps[0] == doctest::Approx(taps[10]).epsilon(1e-15));
  }

  TEST_CASE("sliding-window oracle on random pairs") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto a = textured_image(64, 64, 100 + s);
      const auto b = noisy(a, 0.1, 200 + s);
      const double v = ssim(a, b);
      CHECK(rel_diff(v, oracle::ssim(a, b)) < 1e-6);
      CHECK(v == doctest::Approx(ssim(b, a)).epsilon(1e-9));
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_SUITE("uciqe") {
  TEST_CASE("closed forms") {
    CHECK(uciqe(ImageRGB(16, 16, 0.4)) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    // S = 1 everywhere with a flat L and a single chroma: only the saturation term survives.
    const UnderwaterConstants k;
    const auto t = uciqe_terms(ImageRGB(16, 16, std::array<double, 3>{1.0, 0.0, 0.0}));
    CHECK(t.sigma_chroma == doctest::Approx(0.0).scale(1.0));
    CHECK(t.contrast == 0.0);
    CHECK(t.mean_saturation == 1.0);
    CHECK(t.score == doctest::Approx(k.uciqe_saturation).epsilon(1e-12));
  }

  TEST_CASE("per-term oracle on random images") {
    const UnderwaterConstants k;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto img = random_image(64, 64, 300 + s);
      const auto t = uciqe_terms(img);
      const auto o = oracle::uciqe(img);
      CHECK(rel_diff(t.sigma_chroma, o.sigma_chroma) < 1e-6);
      CHECK(rel_diff(t.contrast, o.contrast) < 1e-6);
      CHECK(rel_diff(t.mean_saturation, o.saturation) < 1e-6);
      const double score = k.uciqe_chroma * o.sigma_chroma + k.uciqe_contrast * o.contrast + k.uciqe_saturation * o.saturation;
      CHECK(rel_diff(t.score, score) < 1e-6);
    }
  }
}

TEST_SUITE("uiqm") {
  TEST_CASE("constant gray image scores zero") {
    const auto t = uiqm_terms(ImageRGB(32, 32, 0.5));
    CHECK(t.uicm == 0.0);
    CHECK(t.uism == 0.0);
    CHECK(t.uiconm == 0.0);
    CHECK(t.score == 0.0);
  }

  TEST_CASE("red has colour asymmetry, gray has none") {
    CHECK(std::abs(uicm(ImageRGB(16, 16, std::array<double, 3>{1.0, 0.0, 0.0}))) > 0.0);
    CHECK(std::abs(uicm(ImageRGB(16, 16, 0.3))) < 1e-12);
  }

  TEST_CASE("sub-scores match blockwise oracles") {
    const UnderwaterConstants k;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto img = s % 2 ? random_image(64, 64, 400 + s) : textured_image(64, 64, 400 + s);
      const auto t = uiqm_terms(img);
      const double uicm = oracle::uicm(img), uism = oracle::uism(img), uiconm = oracle::uiconm(img);
      CHECK(rel_diff(t.uicm, uicm) < 1e-6);
      CHECK(rel_diff(t.uism, uism) < 1e-6);
      CHECK(rel_diff(t.uiconm, uiconm) < 1e-6);
      CHECK(rel_diff(t.score, k.uiqm_uicm * uicm + k.uiqm_uism * uism + k.uiqm_uiconm * uiconm) < 1e-6);
    }
  }

  TEST_CASE("eme skips empty blocks and ignores ragged edges") {
    std::vector<double> plane(10 * 9, 0.0);
    CHECK(eme(plane, 10, 9, 8) == 0.0);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) plane[y * 9 + x] = 1.0 + static_cast<double>(x == 0 && y == 0);
    plane[9 * 9 + 8] = 100.0;  // outside the only full block
    CHECK(eme(plane, 10, 9, 8) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(eme(plane, 10, 9, 0), ConfigError);
  }
}

TEST_SUITE("metric properties") {
  TEST_CASE("flip invariance of the no-reference metrics") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto img = textured_image(64, 64, 500 + s);
      for (const auto& f : {flip_horizontal(img), flip_vertical(img)}) {
        CHECK(uciqe(f) == doctest::Approx(uciqe(img)).epsilon(1e-6));
        CHECK(uiqm(f) == doctest::Approx(uiqm(img)).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("purity") {
    const auto img = random_image(32, 32, 6);
    CHECK(uiqm(img) == uiqm(img));
    CHECK(uciqe(img) == uciqe(img));
  }
}

TEST_SUITE("report") {
  TEST_CASE("records and aggregates") {
    const auto a = random_image(16, 16, 7), b = random_image(16, 16, 8);
    EvalReport r;
    r.config_hash = config_hash({{"x", 1}});
    r.per_image.push_back(evaluate("one", a, &b));
    r.per_image.push_back(evaluate("two", a, &a));
    r.per_image.push_back(evaluate("three", b, nullptr));
    CHECK(r.per_image[2].psnr == std::nullopt);
    r.summarize();
    CHECK(r.aggregate.at("psnr").count == 2);
    CHECK(r.aggregate.at("uiqm").count == 3);
    const double p1 = *r.per_image[0].psnr;
    CHECK(r.aggregate.at("psnr").mean == doctest::Approx((p1 + 100.0) / 2));
    CHECK(r.aggregate.at("psnr").std == doctest::Approx(std::abs(100.0 - p1) / 2));

    const auto j = r.to_json();
    CHECK(j.at("config_hash") == r.config_hash);
    CHECK(j.at("per_image").size() == 3);
    CHECK(j.at("per_image")[0].at("id") == "one");
    CHECK(j.at("per_image")[2].at("psnr").is_null());
    CHECK(j.at("aggregate").at("ssim").contains("mean"));
    CHECK(j.at("aggregate").at("ssim").contains("std"));
    CHECK(j.dump() == r.to_json().dump());

    const auto csv = r.to_csv("mtur");
    CHECK(csv.rfind("method,", 0) == 0);
    CHECK(csv.find("\nmtur,") != std::string::npos);
  }

  TEST_CASE("non-finite values are refused") {
    EvalReport r;
    MetricRecord m;
    m.id = "bad";
    m.uiqm = std::nan("");
    r.per_image.push_back(m);
    r.summarize();
    CHECK_THROWS_AS(r.to_json(), NumericalError);
  }

  TEST_CASE("hashes") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(config_hash({{"b", 1}, {"a", 2}}) == config_hash({{"a", 2}, {"b", 1}}));
    CHECK(config_hash({{"a", 1}}) != config_hash({{"a", 2}}));
  }
}
