#include "texsds/errors.hpp"
#include "texsds/texfield.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace texsds;
using texsds::testing::randomize_parameters;
using texsds::testing::reference_hash;
using texsds::testing::reference_query;

namespace {

FieldConfig small_config(int log2 = 10) {
  FieldConfig c;
  c.num_levels = 6;
  c.log2_table_size = log2;
  c.base_resolution = 4;
  c.finest_resolution = 64;
  c.mlp_hidden_width = 16;
  c.seed = 3;
  return c;
}

Vec3 random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {u(rng), u(rng), u(rng)};
}

double mean_output(const TextureField& field, const std::vector<Vec3>& points) {
  double s = 0.0;
  for (const auto& p : points) s += field.query(p).sum();
  return s / (3.0 * static_cast<double>(points.size()));
}

}  // namespace

TEST_CASE("default parameter count") {
  const FieldConfig c;
  // 16 levels x 2^19 entries x 2 features, then 32->64, 64->64, 64->3 dense
  // layers with biases.
  const std::size_t expected = 16ull * (1ull << 19) * 2 + (32 * 64 + 64) + (64 * 64 + 64) + (64 * 3 + 3);
  CHECK(c.parameter_count() == expected);
  CHECK(expected == 16783683ull);
  CHECK(TextureField(small_config()).parameter_count() == small_config().parameter_count());
}

TEST_CASE("initialization is deterministic under the seed") {
  FieldConfig c;
  c.seed = 7;
  const TextureField a(c);
  const TextureField b(c);
  CHECK(a == b);
  c.seed = 8;
  CHECK_FALSE(TextureField(c) == a);
}

TEST_CASE("initial tables lie in [-1e-4, 1e-4] and biases are zero") {
  const TextureField field(small_config());
  const auto params = field.parameters();
  const std::size_t tables = field.config().table_parameter_count();
  CHECK(std::all_of(params.begin(), params.begin() + tables, [](float v) { return std::abs(v) <= 1e-4f; }));
  for (const DenseLayer& layer : field.layers()) {
    for (int i = 0; i < layer.outputs; ++i) CHECK(params[layer.bias_offset + i] == 0.0f);
  }
}

TEST_CASE("invalid configs") {
  FieldConfig c;
  c.num_levels = 0;
  CHECK_THROWS_AS(TextureField{c}, InvalidArgument);
  c = FieldConfig{};
  c.finest_resolution = 8;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = FieldConfig{};
  c.mlp_hidden_width = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  CHECK_THROWS_AS(TextureField(small_config(), std::vector<float>(5)), InvalidArgument);
}

TEST_CASE("level resolutions follow the geometric growth rule") {
  const TextureField field(FieldConfig{});
  CHECK(field.level_resolution(0) == 16);
  CHECK(field.level_resolution(15) == 2048);
  const double b = std::exp(std::log(2048.0 / 16.0) / 15.0);
  for (int l = 0; l < 16; ++l) {
    CHECK(field.level_resolution(l) == static_cast<int>(std::floor(16.0 * std::pow(b, l) * (1.0 + 1e-12))));
  }
}

TEST_CASE("spatial hash matches an independent recompute") {
  CHECK(spatial_hash(3, 5, 7, 19) == reference_hash(3, 5, 7, 19));
  // (3 ^ 13277178805 mod 2^32 ^ 5634219027 mod 2^32) mod 2^19, by hand:
  const std::uint64_t hy = (5ull * 2654435761ull) & 0xffffffffull;
  const std::uint64_t hz = (7ull * 805459861ull) & 0xffffffffull;
  CHECK(spatial_hash(3, 5, 7, 19) == ((3ull ^ hy ^ hz) & ((1ull << 19) - 1)));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const std::uint32_t x = rng() % 5000, y = rng() % 5000, z = rng() % 5000;
    const int log2 = 1 + static_cast<int>(rng() % 24);
    REQUIRE(spatial_hash(x, y, z, log2) == reference_hash(x, y, z, log2));
  }
}

TEST_CASE("grid corner gets weight one") {
  TextureField field(small_config());
  randomize_parameters(field, 11);
  const int level = 2;
  const int n = field.level_resolution(level);
  // Lattice index 3 along each axis sits at p = 2 * 3 / n - 1.
  const Vec3 p = Vec3::Constant(2.0 * 3 / n - 1.0);
  const CellCorners cell = field.locate(p, level);
  CHECK(cell.base[0] == 3);
  CHECK(cell.weight[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (int c = 1; c < 8; ++c) CHECK(std::abs(cell.weight[c]) < 1e-12);

  const auto enc = field.hash_encode(p);
  const std::size_t slot = reference_hash(3, 3, 3, field.config().log2_table_size);
  const auto params = field.parameters();
  for (int f = 0; f < 2; ++f) {
    CHECK(enc[level * 2 + f] ==
          doctest::Approx(params[field.table_offset(level) + slot * 2 + f]).epsilon(1e-9));
  }
}

TEST_CASE("cell center weights are all one eighth") {
  const TextureField field(small_config());
  const int level = 1;
  const int n = field.level_resolution(level);
  const Vec3 p = Vec3::Constant(2.0 * 2.5 / n - 1.0);
  const CellCorners cell = field.locate(p, level);
  for (int c = 0; c < 8; ++c) CHECK(cell.weight[c] == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("points outside the cube are clamped") {
  TextureField field(small_config());
  randomize_parameters(field, 2);
  CHECK(((field.query(Vec3(3, -4, 0.2)) - field.query(Vec3(1, -1, 0.2))).norm() == 0.0));
}

TEST_CASE("query matches an independent forward pass") {
  TextureField field(small_config());
  randomize_parameters(field, 5);
  const std::vector<float> params(field.parameters().begin(), field.parameters().end());
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = random_point(rng);
    CHECK((field.query(p) - reference_query(field.config(), params, p)).norm() < 1e-9);
  }
}

TEST_CASE("outputs are bounded and pure") {
  TextureField field(small_config());
  randomize_parameters(field, 6, 4.0);
  std::mt19937_64 rng(2);
  std::vector<Vec3> points;
  for (int i = 0; i < 500; ++i) points.push_back(random_point(rng));
  std::vector<Color> batch(points.size());
  field.query(points, batch);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Color c = field.query(points[i]);
    CHECK((c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0));
    CHECK(c == batch[i]);
    CHECK(c == field.query(points[i]));
  }
}

TEST_CASE("gradient matches central differences on 100 parameters") {
  TextureField field(small_config());
  randomize_parameters(field, 21);
  std::mt19937_64 rng(4);
  std::vector<Vec3> points;
  for (int i = 0; i < 8; ++i) points.push_back(random_point(rng));

  std::vector<double> grad(field.parameter_count(), 0.0);
  const Color d = Color::Constant(1.0 / (3.0 * static_cast<double>(points.size())));
  for (const auto& p : points) field.accumulate_gradient(p, d, grad);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (grad[i] != 0.0) candidates.push_back(i);
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  REQUIRE(candidates.size() >= 100);
  candidates.resize(100);

  double err2 = 0.0, ref2 = 0.0;
  auto params = field.parameters();
  for (std::size_t idx : candidates) {
    const float saved = params[idx];
    params[idx] = saved + 1e-3f;
    const double up = mean_output(field, points);
    const double hi = params[idx];
    params[idx] = saved - 1e-3f;
    const double down = mean_output(field, points);
    const double lo = params[idx];
    params[idx] = saved;
    const double fd = (up - down) / (hi - lo);
    err2 += (fd - grad[idx]) * (fd - grad[idx]);
    ref2 += fd * fd;
  }
  CHECK(std::sqrt(err2 / ref2) < 1e-3);
}

TEST_CASE("untouched table entries do not affect a query") {
  TextureField field(small_config());
  randomize_parameters(field, 8);
  const Vec3 p(0.13, -0.42, 0.77);
  std::set<std::size_t> touched;
  for (int l = 0; l < field.config().num_levels; ++l) {
    const CellCorners cell = field.locate(p, l);
    for (int c = 0; c < 8; ++c) {
      for (int f = 0; f < 2; ++f) touched.insert(field.table_offset(l) + cell.slot[c] * 2 + f);
    }
  }
  const Color before = field.query(p);
  std::mt19937_64 rng(3);
  auto params = field.parameters();
  int perturbed = 0;
  while (perturbed < 50) {
    const std::size_t idx = rng() % field.config().table_parameter_count();
    if (touched.count(idx)) continue;
    params[idx] += 10.0f;
    ++perturbed;
  }
  CHECK(field.query(p) == before);
}

TEST_CASE("query is continuous") {
  TextureField field(small_config());
  randomize_parameters(field, 12);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = 0.99 * random_point(rng);
    const Vec3 delta = 1e-6 * random_point(rng).normalized();
    CHECK((field.query(p) - field.query(p + delta)).cwiseAbs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("every parameter receives gradient from random surface points") {
  FieldConfig c = small_config(6);
  c.num_levels = 4;
  c.base_resolution = 4;
  c.finest_resolution = 32;
  const TextureField field(c);
  const TriangleMesh cube = texsds::testing::unit_cube();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> grad(field.parameter_count(), 0.0);
  std::vector<double> any(field.parameter_count(), 0.0);
  for (int i = 0; i < 4096; ++i) {
    const std::size_t f = rng() % cube.face_count();
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Vec3 p = (1.0 - a - b) * cube.corner_position(f, 0) + a * cube.corner_position(f, 1) +
                   b * cube.corner_position(f, 2);
    std::fill(grad.begin(), grad.end(), 0.0);
    field.accumulate_gradient(p, Color(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5), grad);
    for (std::size_t k = 0; k < grad.size(); ++k) any[k] += std::abs(grad[k]);
  }
  const auto zero = std::count(any.begin(), any.end(), 0.0);
  CHECK(zero == 0);
}
