#include "texsds/baker.hpp"
#include "texsds/reference.hpp"
#include "texsds/render.hpp"
#include "texsds/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace texsds;

namespace {

TriangleMesh cube() {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) mesh.vertices.emplace_back(i & 1 ? 1 : -1, i & 2 ? 1 : -1, i & 4 ? 1 : -1);
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    mesh.faces.push_back(Face{q[0], q[1], q[2]});
    mesh.faces.push_back(Face{q[0], q[2], q[3]});
  }
  mesh.normals = compute_vertex_normals(mesh.vertices, mesh.faces);
  return ensure_uv_atlas(normalize_mesh(std::move(mesh)));
}

std::vector<Vec3> random_points(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> points(n);
  for (auto& p : points) p = Vec3(u(rng), u(rng), u(rng));
  return points;
}

void BM_FieldQuery(benchmark::State& state) {
  const TextureField field{FieldConfig{}};
  const auto points = random_points(4096);
  std::vector<Color> out(points.size());
  for (auto _ : state) {
    field.query(points, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(points.size()));
}
BENCHMARK(BM_FieldQuery)->Unit(benchmark::kMillisecond);

void BM_FieldBackward(benchmark::State& state) {
  const TextureField field{FieldConfig{}};
  const auto points = random_points(4096);
  std::vector<double> grad(field.parameter_count(), 0.0);
  FieldEvaluator eval(field);
  for (auto _ : state) {
    for (const auto& p : points) eval.accumulate_gradient(p, Color::Constant(1.0), grad);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(points.size()));
}
BENCHMARK(BM_FieldBackward)->Unit(benchmark::kMillisecond);

void BM_Render(benchmark::State& state) {
  const TriangleMesh mesh = cube();
  const TextureField field{FieldConfig{}};
  const int res = static_cast<int>(state.range(0));
  const CameraSample cam{30.0, 45.0, 1.5};
  for (auto _ : state) benchmark::DoNotOptimize(render(mesh, field, cam, res));
}
BENCHMARK(BM_Render)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_RenderBackward(benchmark::State& state) {
  const TriangleMesh mesh = cube();
  const TextureField field{FieldConfig{}};
  const int res = static_cast<int>(state.range(0));
  const auto out = render(mesh, field, CameraSample{30.0, 45.0, 1.5}, res);
  const Image d_rgb(res, res, 3, 1e-3f);
  std::vector<double> grad(field.parameter_count(), 0.0);
  for (auto _ : state) {
    render_backward(field, out, d_rgb, grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_RenderBackward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const TriangleMesh mesh = cube();
  auto backend = make_pattern_backend(mesh, PatternSpec{});
  RunConfig run;
  run.batch_size = static_cast<int>(state.range(0));
  run.render.resolution = 64;
  Trainer trainer(mesh, *backend, run, TrainState(TextureField(FieldConfig{})));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Bake(benchmark::State& state) {
  const TriangleMesh mesh = cube();
  const TextureField field{FieldConfig{}};
  const int res = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bake(mesh, field, res));
}
BENCHMARK(BM_Bake)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
