#include "texsds/trainer.hpp"

#include "texsds/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

namespace texsds {
namespace {

// Independent stream per (seed, step, view, purpose).
std::mt19937_64 stream(std::uint64_t seed, std::int64_t step, std::uint64_t view, std::uint32_t purpose) {
  const auto s = static_cast<std::uint64_t>(step);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(view), static_cast<std::uint32_t>(view >> 32), purpose};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kCameraStream = 0x63616d;
constexpr std::uint32_t kSdsStream = 0x736473;

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw ConfigError(std::string(name) + " is inverted");
}

std::vector<double> moving_average(const std::vector<double>& loss, int window) {
  std::vector<double> ma(loss.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < loss.size(); ++i) {
    acc += loss[i];
    if (i >= static_cast<std::size_t>(window)) acc -= loss[i - window];
    ma[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return ma;
}

}  // namespace

void RunConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  if (render.resolution < 1) throw ConfigError("render resolution must be >= 1");
  if (render.depth_resolution < 1) throw ConfigError("depth_resolution must be >= 1");
  if (!(render.fov_y > 0.0 && render.fov_y < 180.0)) throw ConfigError("fov_y must lie in (0, 180)");
  check_range(render.elev_range, "elev_range");
  check_range(render.dist_range, "dist_range");
  check_range(render.azim_range, "azim_range");
  if (render.elev_range.lo < -90.0 || render.elev_range.hi > 90.0) {
    throw ConfigError("elev_range must lie in [-90, 90]");
  }
  if (!(render.dist_range.lo > 0.0)) throw ConfigError("dist_range must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip must be > 0 or null");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  try {
    guidance.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

void adam_update(std::span<float> params, std::span<const double> gradient, AdamState& state,
                 const AdamSettings& s, double learning_rate) {
  if (gradient.size() != params.size()) throw InvalidArgument("adam_update: gradient size mismatch");
  if (state.m.empty()) state.m.assign(params.size(), 0.0f);
  if (state.v.empty()) state.v.assign(params.size(), 0.0f);
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw InvalidArgument("adam_update: optimizer state size mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    const double m = s.beta1 * state.m[i] + (1.0 - s.beta1) * g;
    const double v = s.beta2 * state.v[i] + (1.0 - s.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    params[i] = static_cast<float>(params[i] - learning_rate * (m / c1) / (std::sqrt(v / c2) + s.epsilon));
  }
}

std::vector<ViewDraw> draw_views(const RunConfig& config, std::int64_t step) {
  auto camera_rng = stream(config.seed, step, 0, kCameraStream);
  const auto cameras = sample_cameras(camera_rng, config.batch_size, config.render.elev_range,
                                      config.render.dist_range, config.render.azim_range, config.render.fov_y);
  std::vector<ViewDraw> views(cameras.size());
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    auto rng = stream(config.seed, step, v, kSdsStream);
    views[v].camera = cameras[v];
    views[v].sds.t = sample_timestep(rng, config.guidance.t_range);
    views[v].sds.noise_seed = rng();
  }
  return views;
}

Trainer::Trainer(const TriangleMesh& mesh, GuidanceBackend& backend, RunConfig config, TrainState state)
    : mesh_(mesh), backend_(backend), config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
}

StepReport Trainer::step() { return step(draw_views(config_, state_.completed_steps())); }

StepReport Trainer::step(std::span<const ViewDraw> views) {
  if (views.empty()) throw InvalidArgument("training step needs at least one view");
  const auto started = std::chrono::steady_clock::now();
  const std::int64_t index = state_.completed_steps();
  TextureField& field = state_.field;

  const RenderOptions options{config_.render.background};
  const int depth_size =
      backend_.depth_resolution() > 0 ? backend_.depth_resolution() : config_.render.depth_resolution;

  std::vector<RenderOutput> renders;
  std::vector<Image> images;
  std::vector<DepthCondition> depths;
  std::vector<SdsDraw> draws;
  std::vector<CameraSample> cameras;
  for (const ViewDraw& view : views) {
    renders.push_back(render(mesh_, field, view.camera, config_.render.resolution, options));
    images.push_back(renders.back().rgb);
    depths.push_back(prepare_depth_condition(renders.back(), depth_size));
    draws.push_back(view.sds);
    cameras.push_back(view.camera);
  }
  const SdsResult sds = sds_gradient(backend_, images, depths, config_.guidance, draws, cameras);

  gradient_.assign(field.parameter_count(), 0.0);
  const double scale = 1.0 / static_cast<double>(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    render_backward(field, renders[v], sds.image_grads[v], gradient_, scale);
  }

  double sq = 0.0;
  for (double g : gradient_) sq += g * g;
  if (!std::isfinite(sq) || !std::isfinite(sds.loss)) {
    throw NumericError("non-finite gradient at step " + std::to_string(index));
  }
  StepReport report;
  report.loss = sds.loss;
  report.gradient_norm = std::sqrt(sq);
  if (config_.grad_clip && report.gradient_norm > *config_.grad_clip) {
    const double factor = *config_.grad_clip / (report.gradient_norm * (1.0 + 1e-12));
    for (double& g : gradient_) g *= factor;
    report.gradient_norm *= factor;
    report.clipped = true;
  }

  adam_update(field.parameters(), gradient_, state_.adam, config_.adam, config_.learning_rate);
  for (float p : field.parameters()) {
    if (!std::isfinite(p)) throw NumericError("non-finite parameter after step " + std::to_string(index));
  }

  const auto elapsed = std::chrono::steady_clock::now() - started;
  state_.trace.loss.push_back(report.loss);
  state_.trace.millis.push_back(std::chrono::duration<double, std::milli>(elapsed).count());
  return report;
}

TrainResult train(const TriangleMesh& mesh, const TextureField& field, GuidanceBackend& backend,
                  const RunConfig& config, const TrainOptions& options) {
  TrainState state = resume_training(mesh, TrainState(field), backend, config, options);
  return {std::move(state.field), std::move(state.trace)};
}

TrainState resume_training(const TriangleMesh& mesh, TrainState state, GuidanceBackend& backend,
                           const RunConfig& config, const TrainOptions& options) {
  Trainer trainer(mesh, backend, config, std::move(state));
  TrainState& s = trainer.state();
  auto checkpoint = [&] {
    if (!options.checkpoint_path) return;
    s.trace.checkpoints.push_back(s.completed_steps());
    save_checkpoint(*options.checkpoint_path, s);
  };

  while (s.completed_steps() < config.steps) {
    StepReport report;
    try {
      report = trainer.step();
    } catch (const BackendError&) {
      checkpoint();
      throw;
    } catch (const ProtocolError&) {
      checkpoint();
      throw;
    }
    if (options.on_step) options.on_step(s.completed_steps() - 1, report);
    if (config.checkpoint_every > 0 && s.completed_steps() % config.checkpoint_every == 0 &&
        s.completed_steps() < config.steps) {
      checkpoint();
    }
  }
  if (options.checkpoint_path &&
      (s.trace.checkpoints.empty() || s.trace.checkpoints.back() != s.completed_steps())) {
    checkpoint();
  }
  return std::move(s);
}

std::optional<std::int64_t> detect_convergence(const LossTrace& trace, int window, double rel_tol) {
  if (window < 2) throw InvalidArgument("convergence window must be >= 2");
  const auto ma = moving_average(trace.loss, window);
  for (std::size_t s = window; s < ma.size(); ++s) {
    const double before = ma[s - window];
    const double rel = before != 0.0 ? (before - ma[s]) / std::abs(before) : 0.0;
    if (rel < rel_tol) return static_cast<std::int64_t>(s);
  }
  return std::nullopt;
}

double loss_reduction_fraction(const LossTrace& trace, std::size_t at, int window) {
  if (window < 1) throw InvalidArgument("window must be >= 1");
  if (trace.loss.empty()) return 0.0;
  const auto ma = moving_average(trace.loss, window);
  const std::size_t first = std::min<std::size_t>(window - 1, ma.size() - 1);
  const double start = ma[first];
  const double total = start - ma.back();
  if (total <= 0.0) return 1.0;
  return (start - ma[std::min(at, ma.size() - 1)]) / total;
}

void write_loss_csv(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,loss,millis\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.loss.size(); ++i) {
    out << i << ',' << trace.loss[i] << ',' << (i < trace.millis.size() ? trace.millis[i] : 0.0) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace texsds
