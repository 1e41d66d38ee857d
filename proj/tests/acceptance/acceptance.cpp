// Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include "cli.hpp"

#include "texsds/baker.hpp"
#include "texsds/config.hpp"
#include "texsds/diffusion_client.hpp"
#include "texsds/errors.hpp"
#include "texsds/guidance.hpp"
#include "texsds/reference.hpp"
#include "texsds/render.hpp"
#include "texsds/trainer.hpp"

#include "test_support.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace texsds;
using nlohmann::json;
namespace ts = texsds::testing;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [failed]");
  }
};

std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), format, a, b);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Relative L2 error between central differences of `objective` and `grad`
// over `indices`.
double fd_relative_error(std::span<float> params, const std::vector<double>& grad,
                         const std::vector<std::size_t>& indices, float h, const std::function<double()>& objective) {
  double err2 = 0.0;
  double ref2 = 0.0;
  for (std::size_t idx : indices) {
    const float saved = params[idx];
    params[idx] = saved + h;
    const double up = objective();
    const double hi = params[idx];
    params[idx] = saved - h;
    const double down = objective();
    const double lo = params[idx];
    params[idx] = saved;
    const double fd = (up - down) / (hi - lo);
    err2 += (fd - grad[idx]) * (fd - grad[idx]);
    ref2 += fd * fd;
  }
  return std::sqrt(err2 / ref2);
}

std::vector<std::size_t> pick_nonzero(const std::vector<double>& grad, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> nonzero;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (grad[i] != 0.0) nonzero.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(nonzero.begin(), nonzero.end(), rng);
  if (nonzero.size() > count) nonzero.resize(count);
  return nonzero;
}

// 1 --------------------------------------------------------------------------

void gradient_correctness(Verdict& v) {
  const auto start = std::chrono::steady_clock::now();
  {
    TextureField field{FieldConfig{}};
    ts::randomize_parameters(field, 11);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> points;
    for (int i = 0; i < 16; ++i) points.emplace_back(u(rng), u(rng), u(rng));
    std::vector<double> grad(field.parameter_count(), 0.0);
    const Color d = Color::Constant(1.0 / (3.0 * static_cast<double>(points.size())));
    for (const auto& p : points) field.accumulate_gradient(p, d, grad);
    const auto indices = pick_nonzero(grad, 100, 13);
    const double err = fd_relative_error(field.parameters(), grad, indices, 1e-3f, [&] {
      double s = 0.0;
      for (const auto& p : points) s += field.query(p).sum();
      return s / (3.0 * static_cast<double>(points.size()));
    });
    v.require(indices.size() == 100 && err < 1e-3, fmt("field rel err %.2e < 1e-3", err));
  }
  {
    TriangleMesh mesh;
    mesh.vertices = {Vec3(-0.6, -0.5, 0.1), Vec3(0.5, -0.6, -0.1), Vec3(0.0, 0.6, 0.0), Vec3(0.7, 0.5, 0.3),
                     Vec3(-0.7, 0.4, -0.3)};
    mesh.faces = {Face{0, 1, 2}, Face{1, 3, 2}, Face{0, 2, 4}};
    FieldConfig cfg;
    cfg.num_levels = 8;
    cfg.log2_table_size = 14;
    cfg.finest_resolution = 256;
    TextureField field(cfg);
    ts::randomize_parameters(field, 14);
    CameraSample cam;
    cam.elevation = 20.0;
    cam.azimuth = 15.0;
    cam.distance = 2.0;
    const int res = 32;
    const auto out = render(mesh, field, cam, res);
    const Image d_rgb(res, res, 3, static_cast<float>(1.0 / (res * res * 3)));
    std::vector<double> grad(field.parameter_count(), 0.0);
    render_backward(field, out, d_rgb, grad);
    const auto indices = pick_nonzero(grad, 100, 15);
    const double err = fd_relative_error(field.parameters(), grad, indices, 1e-3f, [&] {
      const auto o = render(mesh, field, cam, res);
      double s = 0.0;
      for (float x : o.rgb.data) s += x;
      return s / static_cast<double>(o.rgb.data.size());
    });
    v.require(err < 1e-2, fmt("renderer rel err %.2e < 1e-2 (3 triangles, 32x32)", err));
  }
  const double secs = seconds_since(start);
  v.require(secs < 60.0, fmt("%.1f s < 60 s", secs));
}

// 2 --------------------------------------------------------------------------

void depth_oracle(Verdict& v) {
  const auto start = std::chrono::steady_clock::now();
  const TriangleMesh cube = ts::unit_cube();
  const TextureField field(FieldConfig{.num_levels = 2, .log2_table_size = 8, .base_resolution = 2,
                                       .finest_resolution = 4, .mlp_hidden_width = 8, .mlp_hidden_layers = 1});
  RenderSettings settings;
  std::mt19937_64 rng(21);
  const auto cameras = sample_cameras(rng, 24, settings.elev_range, settings.dist_range, settings.azim_range);
  double worst = 0.0;
  std::size_t mask_mismatch = 0;
  for (const auto& cam : cameras) {
    const auto out = render(cube, field, cam, 64);
    const auto ref = ts::ray_cast(cube, cam, 64);
    for (std::size_t i = 0; i < ref.depth.size(); ++i) {
      if (out.mask[i] != ref.mask[i]) ++mask_mismatch;
      worst = std::max(worst, std::abs(static_cast<double>(out.depth[i]) - ref.depth[i]));
    }
  }
  v.require(cameras.size() >= 20, fmt("%.0f cameras", static_cast<double>(cameras.size())));
  v.require(mask_mismatch == 0, fmt("%.0f mask mismatches", static_cast<double>(mask_mismatch)));
  v.require(worst <= 1e-4, fmt("max depth diff %.2e <= 1e-4", worst));
  const double secs = seconds_since(start);
  v.require(secs < 60.0, fmt("%.1f s < 60 s", secs));
}

// 3 --------------------------------------------------------------------------

void analytic_identity(Verdict& v) {
  const int res = 16;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image x(res, res, 3);
  Image y(res, res, 3);
  for (auto& e : x.data) e = u(rng);
  for (auto& e : y.data) e = u(rng);
  AnalyticBackend backend(y);
  GuidanceConfig config;
  config.weighting = Weighting::uniform;
  const DepthCondition depth{1, {0.0f}};

  double closed_worst = 0.0;
  double fd_worst = 0.0;
  for (double t : {0.05, 0.3, 0.5, 0.77, 0.95}) {
    const SdsDraw draw{t, 1000 + static_cast<std::uint64_t>(t * 100)};
    const auto result = sds_gradient(backend, std::span(&x, 1), std::span(&depth, 1), config, std::span(&draw, 1));
    const double a = cosine_schedule(t).alpha;
    const Image& g = result.image_grads[0];
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double closed = a * a * (static_cast<double>(x.data[i]) - y.data[i]);
      closed_worst = std::max(closed_worst, std::abs(g.data[i] - closed));
    }
    // Central differences of 0.5 a^2 ||x - y||^2 in double precision.
    auto objective = [&](std::size_t i, double xi) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.data.size(); ++k) {
        const double xk = k == i ? xi : static_cast<double>(x.data[k]);
        s += (xk - y.data[k]) * (xk - y.data[k]);
      }
      return 0.5 * a * a * s;
    };
    for (std::size_t i = 0; i < x.data.size(); i += 7) {
      const double h = 1e-4;
      const double fd = (objective(i, x.data[i] + h) - objective(i, x.data[i] - h)) / (2 * h);
      fd_worst = std::max(fd_worst, std::abs(g.data[i] - fd));
    }
  }
  v.require(closed_worst <= 1e-6, fmt("closed form max diff %.2e <= 1e-6", closed_worst));
  v.require(fd_worst <= 1e-4, fmt("finite difference max diff %.2e <= 1e-4", fd_worst));
}

// 4 and 6 share the trained field ----------------------------------------------

FieldConfig convergence_field() {
  FieldConfig c;
  c.num_levels = 8;
  c.log2_table_size = 14;
  c.base_resolution = 4;
  c.finest_resolution = 128;
  c.mlp_hidden_width = 32;
  return c;
}

std::optional<TextureField> trained;

void end_to_end(Verdict& v) {
  const auto start = std::chrono::steady_clock::now();
  const TriangleMesh cube = ts::unit_cube();
  const PatternSpec target;  // waves
  auto backend = make_pattern_backend(cube, target);
  RunConfig run;
  run.steps = 500;
  run.batch_size = 4;
  run.render.resolution = 64;
  run.render.depth_resolution = 16;
  run.seed = 41;
  const TrainResult result = train(cube, TextureField(convergence_field()), *backend, run);
  trained = result.field;

  std::mt19937_64 rng(42);  // held-out views: fresh draws from the training ranges
  const auto views =
      sample_cameras(rng, 8, run.render.elev_range, run.render.dist_range, run.render.azim_range);
  double worst = 0.0;
  for (const auto& cam : views) {
    const auto out = render(cube, result.field, cam, 64);
    const auto ref = render_pattern(cube, target, cam, 64);
    double err = 0.0;
    int n = 0;
    for (int yy = 0; yy < 64; ++yy) {
      for (int xx = 0; xx < 64; ++xx) {
        if (!out.mask[static_cast<std::size_t>(yy) * 64 + xx]) continue;
        err += (out.rgb.rgb(xx, yy) - ref.rgb.rgb(xx, yy)).cwiseAbs().mean();
        ++n;
      }
    }
    worst = std::max(worst, err / n);
  }
  const double fraction = loss_reduction_fraction(result.trace, static_cast<std::size_t>(run.steps / 2 - 1), 50);
  v.require(result.trace.size() == 500, "500 steps, batch 4, 64x64");
  v.require(worst < 0.05, fmt("worst held-out MAE %.4f < 0.05", worst));
  v.require(fraction >= 0.8, fmt("%.1f%% of smoothed loss reduction in first half >= 80%%", 100.0 * fraction));
  const double secs = seconds_since(start);
  v.require(secs < 600.0, fmt("%.1f s < 600 s", secs));
}

// 5 --------------------------------------------------------------------------

void batch_averaging(Verdict& v) {
  const TriangleMesh cube = ts::unit_cube();
  auto backend = make_pattern_backend(cube, PatternSpec{});
  RunConfig run;
  run.render.resolution = 32;
  run.render.depth_resolution = 8;
  const ViewDraw view{CameraSample{35.0, 120.0, 1.3}, SdsDraw{0.4, 77}};
  Trainer single(cube, *backend, run, TrainState(TextureField(convergence_field())));
  single.step(std::vector<ViewDraw>{view});
  double worst = 0.0;
  for (int k : {2, 4, 8}) {
    Trainer batch(cube, *backend, run, TrainState(TextureField(convergence_field())));
    batch.step(std::vector<ViewDraw>(static_cast<std::size_t>(k), view));
    const auto a = single.state().field.parameters();
    const auto b = batch.state().field.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
  }
  v.require(worst <= 1e-6, fmt("k = 2, 4, 8: max parameter diff %.2e <= 1e-6", worst));
}

// 6 --------------------------------------------------------------------------

void bake_fidelity(Verdict& v) {
  if (!trained) {
    v.require(false, "needs the trained field from criterion 4");
    return;
  }
  const TriangleMesh mesh = ensure_uv_atlas(ts::unit_cube());
  const auto baked = bake(mesh, *trained);
  v.require(baked.image.width == 512 && baked.image.height == 512, "default bake is 512x512");
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& cam : turntable(8, 30.0, 1.5)) {
    const auto direct = render(mesh, *trained, cam, 128);
    const auto textured = render_textured(mesh, baked.image, cam, 128);
    worst = std::min(worst, psnr(direct.rgb, textured.rgb, direct.mask));
  }
  v.require(worst > 30.0, fmt("min PSNR over 8 cameras %.1f dB > 30 dB", worst));
}

// 7 --------------------------------------------------------------------------

void determinism(Verdict& v) {
  const TriangleMesh cube = ts::unit_cube();
  auto backend = make_pattern_backend(cube, PatternSpec{});
  RunConfig run;
  run.steps = 12;
  run.batch_size = 2;
  run.render.resolution = 32;
  run.render.depth_resolution = 8;
  run.seed = 71;
  const auto a = train(cube, TextureField(convergence_field()), *backend, run);
  const auto b = train(cube, TextureField(convergence_field()), *backend, run);
  v.require(a.field == b.field && a.trace.loss == b.trace.loss, "identical seeded runs are bit-identical");

  ts::TempDir dir;
  TrainOptions options;
  options.checkpoint_path = dir / "ckpt.bin";
  RunConfig first = run;
  first.steps = 5;
  resume_training(cube, TrainState(TextureField(convergence_field())), *backend, first, options);
  const TrainState resumed = resume_training(cube, load_checkpoint(dir / "ckpt.bin"), *backend, run);
  v.require(resumed.field == a.field && resumed.trace.loss == a.trace.loss,
            "resume after 5 of 12 steps equals the uninterrupted run");
}

// 8 --------------------------------------------------------------------------

void config_contract(Verdict& v) {
  const json j = json::parse(serialize_experiment_config(ExperimentConfig{}));
  v.require(j["train"]["batch_size"] == 8, "batch 8");
  v.require(j["train"]["steps"] == 5000, "steps 5000");
  v.require(j["train"]["learning_rate"] == 0.01, "lr 0.01");
  v.require(j["guidance"]["guidance_scale"] == 100.0, "guidance scale 100");
  v.require(j["guidance"]["t_range"] == json::array({0.02, 0.98}), "t-range [0.02,0.98]");
  v.require(j["render"]["elev_range"] == json::array({10.0, 80.0}), "elevation [10,80]");
  v.require(j["render"]["dist_range"] == json::array({1.0, 1.5}), "distance [1.0,1.5]");
  v.require(parse_experiment_config(j.dump()) == ExperimentConfig{}, "round trip");
}

// 9 --------------------------------------------------------------------------

json guidance_fixture(const std::string& name) { return json::parse(ts::read_text(ts::fixture_path("guidance/" + name))); }

std::vector<float> floats(const json& values) {
  std::vector<float> out;
  for (const auto& x : values) out.push_back(static_cast<float>(x.get<double>()));
  return out;
}

void protocol_conformance(Verdict& v) {
  const RetryPolicy fast{3, std::chrono::milliseconds(10), 2.0};
  const json e = guidance_fixture("expected.json");
  Image image(8, 8, 3);
  image.data = floats(e["inputs"]["image"]);
  const DepthCondition depth{2, floats(e["inputs"]["depth"])};
  const Tensor noised({4, 2, 2}, floats(e["inputs"]["noised"]));
  const Tensor latent_grad({4, 2, 2}, floats(e["inputs"]["latent_grad"]));
  const std::string prompt = e["inputs"]["prompt"];
  const std::string negative = e["inputs"]["negative_prompt"];

  {
    ts::FixtureServer server;
    ts::serve_golden_fixtures(server);
    server.start();
    DiffusionBackend client(server.endpoint(), kDefaultModelId, fast);
    bool ok = client.encode(image).data == floats(e["latent"]);
    const auto pred = client.predict_noise(noised, e["inputs"]["t"], depth, prompt, negative, std::nullopt);
    ok = ok && pred.eps_cond.data == floats(e["eps_cond"]) && pred.eps_uncond.data == floats(e["eps_uncond"]);
    ok = ok && client.encode_backward(latent_grad, image).data == floats(e["image_grad"]);
    for (const auto& req : server.requests()) {
      if (req.path == "/v1/encode") ok = ok && json::parse(req.body) == guidance_fixture("encode_request.json");
      if (req.path == "/v1/predict_noise") {
        ok = ok && json::parse(req.body) == guidance_fixture("predict_request.json");
      }
      if (req.path == "/v1/encode_grad") {
        ok = ok && json::parse(req.body) == guidance_fixture("encode_grad_request.json");
      }
    }
    v.require(ok, "golden requests and responses");

    const DepthCondition wrong{4, std::vector<float>(16, 0.0f)};
    bool rejected = false;
    try {
      client.predict_noise(noised, 0.5, wrong, prompt, negative, std::nullopt);
    } catch (const ProtocolError&) {
      rejected = true;
    }
    v.require(rejected && server.count("/v1/predict_noise") == 1, "malformed depth shape rejected before sending");
  }
  {
    ts::FixtureServer server;
    // Registered first so it shadows the golden predict_noise handler.
    server.on_post("/v1/predict_noise", [](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content(R"({"error": "depth must be [1, 2, 2]"})", "application/json");
    });
    ts::serve_golden_fixtures(server);
    server.start();
    DiffusionBackend client(server.endpoint(), "", fast);
    bool rejected = false;
    try {
      client.predict_noise(noised, 0.5, depth, prompt, negative, std::nullopt);
    } catch (const ProtocolError&) {
      rejected = true;
    }
    v.require(rejected && server.count("/v1/predict_noise") == 1, "server-side shape rejection not retried");
  }
  {
    ts::FixtureServer server;
    server.on_get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
      res.status = 503;
      res.set_content(R"({"error": "overloaded"})", "application/json");
    });
    server.start();
    ts::TempDir dir;
    json cfg = json::parse(ts::read_text(ts::fixture_path("cube_analytic.json")));
    cfg["mesh"]["path"] = ts::fixture_path("cube.obj").string();
    std::ofstream(dir / "run.json") << cfg.dump();
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run({"texture", (dir / "run.json").string(), "--backend", "diffusion", "--endpoint",
                               server.endpoint(), "--out", (dir / "out").string()},
                              out, err);
    v.require(server.count("/v1/info") == 3, fmt("%.0f attempts == 3", static_cast<double>(server.count("/v1/info"))));
    v.require(code == 4, fmt("CLI exit %.0f == 4", code));
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    void (*run)(Verdict&);
  };
  const Criterion criteria[] = {
      {1, "gradient correctness", gradient_correctness},
      {2, "depth oracle equivalence", depth_oracle},
      {3, "analytic SDS identity", analytic_identity},
      {4, "end-to-end convergence", end_to_end},
      {5, "batch averaging invariant", batch_averaging},
      {6, "bake fidelity", bake_fidelity},
      {7, "determinism", determinism},
      {8, "config contract", config_contract},
      {9, "protocol conformance", protocol_conformance},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    if (!v.pass) ++failures;
    std::cout << "criterion " << c.id << " " << (v.pass ? "PASS" : "FAIL") << " " << c.name << ": "
              << v.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
