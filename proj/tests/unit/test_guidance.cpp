#include "texsds/errors.hpp"
#include "texsds/guidance.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace texsds;

namespace {

Image random_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(size, size, 3);
  for (auto& v : img.data) v = u(rng);
  return img;
}

Tensor tensor_of(std::vector<std::int64_t> shape, std::vector<float> values) {
  return Tensor(std::move(shape), std::move(values));
}

DepthCondition flat_depth(int size) { return DepthCondition{size, std::vector<float>(size * size, 0.0f)}; }

}  // namespace

TEST_CASE("sample_timestep") {
  SUBCASE("default range statistics") {
    std::mt19937_64 rng(1);
    double lo = 1, hi = 0, sum = 0;
    for (int i = 0; i < 10000; ++i) {
      const double t = sample_timestep(rng, {0.02, 0.98});
      lo = std::min(lo, t);
      hi = std::max(hi, t);
      sum += t;
    }
    CHECK(lo >= 0.02);
    CHECK(hi <= 0.98);
    CHECK(std::abs(sum / 10000 - 0.5) < 0.02);
  }
  SUBCASE("degenerate range") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 10; ++i) CHECK(sample_timestep(rng, {0.5, 0.5}) == 0.5);
  }
  SUBCASE("inverted range") {
    std::mt19937_64 rng(3);
    CHECK_THROWS_AS(sample_timestep(rng, {0.9, 0.1}), InvalidArgument);
    CHECK_THROWS_AS(sample_timestep(rng, {-0.1, 0.5}), InvalidArgument);
  }
}

TEST_CASE("cfg_combine") {
  NoisePrediction p{tensor_of({2}, {1.0f, -2.0f}), tensor_of({2}, {0.5f, 0.25f})};
  CHECK(cfg_combine(p, 1.0).data == p.eps_cond.data);
  CHECK(cfg_combine(p, 0.0).data == p.eps_uncond.data);
  const Tensor s100 = cfg_combine(p, 100.0);
  CHECK(s100.data[0] == doctest::Approx(0.5 + 100 * 0.5));
  CHECK(s100.data[1] == doctest::Approx(0.25 + 100 * -2.25));

  SUBCASE("affine in the scale") {
    const double s1 = 3.0, s2 = 11.0, lambda = 0.25;
    const Tensor a = cfg_combine(p, s1), b = cfg_combine(p, s2);
    const Tensor mid = cfg_combine(p, (1 - lambda) * s1 + lambda * s2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(mid.data[i] == doctest::Approx((1 - lambda) * a.data[i] + lambda * b.data[i]).epsilon(1e-6));
    }
  }
  SUBCASE("shape mismatch") {
    NoisePrediction bad{tensor_of({2}, {1, 2}), tensor_of({1}, {1})};
    CHECK_THROWS_AS(cfg_combine(bad, 2.0), InvalidArgument);
  }
}

TEST_CASE("cosine schedule") {
  for (double t : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    const NoiseLevel l = cosine_schedule(t);
    CHECK(l.alpha * l.alpha + l.sigma * l.sigma == doctest::Approx(1.0));
    CHECK(l.alpha == doctest::Approx(std::cos(std::numbers::pi * t / 2)));
  }
}

TEST_CASE("analytic backend denoiser identities") {
  const Image target = random_image(8, 1);
  AnalyticBackend backend(target);
  const Tensor y = backend.encode(target);
  for (double t : {0.1, 0.5, 0.9}) {
    const NoiseLevel l = backend.noise_level(t);
    Tensor clean_noised(y.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) clean_noised.data[i] = static_cast<float>(l.alpha * y.data[i]);
    const auto zero = backend.predict_noise(clean_noised, t, flat_depth(4), "", "", std::nullopt);
    for (float v : zero.eps_cond.data) CHECK(std::abs(v) < 1e-6);

    const Tensor eps = gaussian_noise(y.shape, 77);
    Tensor noised(y.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      noised.data[i] = static_cast<float>(l.alpha * y.data[i] + l.sigma * eps.data[i]);
    }
    const auto pred = backend.predict_noise(noised, t, flat_depth(4), "a", "b", std::nullopt);
    for (std::size_t i = 0; i < eps.data.size(); ++i) CHECK(pred.eps_cond.data[i] == doctest::Approx(eps.data[i]).epsilon(1e-4));
    CHECK(pred.eps_cond.data == pred.eps_uncond.data);
  }
}

TEST_CASE("sds gradient at the target is zero") {
  const Image target = random_image(8, 2);
  AnalyticBackend backend(target);
  GuidanceConfig cfg;
  const std::vector<Image> images{target};
  const std::vector<DepthCondition> depths{flat_depth(4)};
  const std::vector<SdsDraw> draws{{0.4, 123}};
  const auto result = sds_gradient(backend, images, depths, cfg, draws);
  for (float v : result.image_grads[0].data) CHECK(std::abs(v) < 1e-6);
  CHECK(result.loss < 1e-12);
}

TEST_CASE("sds gradient equals the closed form alpha^2 (x - y)") {
  const Image target = random_image(8, 3);
  const Image x = random_image(8, 4);
  AnalyticBackend backend(target);
  GuidanceConfig cfg;
  for (double t : {0.05, 0.3, 0.7, 0.95}) {
    const std::vector<Image> images{x};
    const std::vector<DepthCondition> depths{flat_depth(4)};
    const std::vector<SdsDraw> draws{{t, 99}};
    const auto result = sds_gradient(backend, images, depths, cfg, draws);
    const double a = std::cos(std::numbers::pi * t / 2);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double expected = a * a * (static_cast<double>(x.data[i]) - target.data[i]);
      CHECK(std::abs(result.image_grads[0].data[i] - expected) < 1e-6);
    }
    CHECK(result.steps[0].weight == 1.0);
    // z_t = alpha x + sigma eps
    const double s = std::sin(std::numbers::pi * t / 2);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      CHECK(result.steps[0].noised_input.data[i] ==
            doctest::Approx(a * x.data[i] + s * result.steps[0].noise.data[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("sigma_sq weighting scales the gradient by sigma^2") {
  const Image target = random_image(4, 5), x = random_image(4, 6);
  AnalyticBackend backend(target);
  GuidanceConfig uniform, weighted;
  weighted.weighting = Weighting::sigma_sq;
  const std::vector<Image> images{x};
  const std::vector<DepthCondition> depths{flat_depth(4)};
  const std::vector<SdsDraw> draws{{0.6, 5}};
  const auto a = sds_gradient(backend, images, depths, uniform, draws);
  const auto b = sds_gradient(backend, images, depths, weighted, draws);
  const double s2 = std::pow(std::sin(std::numbers::pi * 0.6 / 2), 2);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(b.image_grads[0].data[i] == doctest::Approx(s2 * a.image_grads[0].data[i]).epsilon(1e-5));
  }
}

TEST_CASE("guidance scale has no effect on the analytic backend") {
  const Image target = random_image(6, 7), x = random_image(6, 8);
  AnalyticBackend backend(target);
  GuidanceConfig one, hundred;
  one.guidance_scale = 1.0;
  hundred.guidance_scale = 100.0;
  const std::vector<Image> images{x};
  const std::vector<DepthCondition> depths{flat_depth(4)};
  const std::vector<SdsDraw> draws{{0.5, 3}};
  CHECK(sds_gradient(backend, images, depths, one, draws).image_grads[0] ==
        sds_gradient(backend, images, depths, hundred, draws).image_grads[0]);
}

TEST_CASE("identical images with shared draws get identical gradients") {
  const Image target = random_image(6, 9), x = random_image(6, 10);
  AnalyticBackend backend(target);
  GuidanceConfig cfg;
  const std::vector<Image> images{x, x};
  const std::vector<DepthCondition> depths{flat_depth(4), flat_depth(4)};
  const std::vector<SdsDraw> draws{{0.3, 42}, {0.3, 42}};
  const auto r = sds_gradient(backend, images, depths, cfg, draws);
  REQUIRE(r.image_grads.size() == 2);
  CHECK(r.image_grads[0] == r.image_grads[1]);
  CHECK(r.image_grads[0].width == x.width);
  CHECK(r.image_grads[0].channels == 3);
  CHECK(r.view_losses[0] == r.view_losses[1]);
}

TEST_CASE("rng overload draws t inside the range") {
  const Image target = random_image(4, 11);
  AnalyticBackend backend(target);
  GuidanceConfig cfg;
  cfg.t_range = {0.2, 0.3};
  std::mt19937_64 rng(5);
  const std::vector<Image> images{target, target, target};
  const std::vector<DepthCondition> depths(3, flat_depth(4));
  const auto r = sds_gradient(backend, images, depths, cfg, rng);
  for (const auto& s : r.steps) CHECK((s.t >= 0.2 && s.t <= 0.3));
}

TEST_CASE("mismatched batch inputs are rejected") {
  AnalyticBackend backend(random_image(4, 1));
  GuidanceConfig cfg;
  const std::vector<Image> images{random_image(4, 2)};
  const std::vector<DepthCondition> depths;
  const std::vector<SdsDraw> draws{{0.5, 1}};
  CHECK_THROWS_AS(sds_gradient(backend, images, depths, cfg, draws), InvalidArgument);
}

TEST_CASE("sds descent on raw pixels reaches the target") {
  const Image target = random_image(16, 12);
  Image x = random_image(16, 13);
  AnalyticBackend backend(target);
  GuidanceConfig cfg;
  std::mt19937_64 rng(14);
  const std::vector<DepthCondition> depths{flat_depth(4)};
  double mae = 1.0;
  int steps = 0;
  for (; steps < 500 && mae >= 0.01; ++steps) {
    const std::vector<Image> images{x};
    const auto r = sds_gradient(backend, images, depths, cfg, rng);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] -= 0.05f * r.image_grads[0].data[i];
    mae = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) mae += std::abs(x.data[i] - target.data[i]);
    mae /= static_cast<double>(x.data.size());
  }
  CHECK(mae < 0.01);
  CHECK(steps <= 500);
}

TEST_CASE("gaussian noise is deterministic and roughly standard") {
  const Tensor a = gaussian_noise({64, 64, 3}, 5);
  CHECK(a == gaussian_noise({64, 64, 3}, 5));
  double mean = 0, sq = 0;
  for (float v : a.data) {
    mean += v;
    sq += v * v;
  }
  mean /= a.data.size();
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(sq / a.data.size() - 1.0) < 0.05);
}
