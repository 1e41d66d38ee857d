#pragma once

#include "texsds/camera.hpp"
#include "texsds/geometry.hpp"
#include "texsds/guidance.hpp"
#include "texsds/render.hpp"
#include "texsds/texfield.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace texsds {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamSettings&) const = default;
};

/// How training views are rendered.
struct RenderSettings {
  int resolution = 512;
  double fov_y = 40.0;
  Color background = Color::Constant(0.5);
  int depth_resolution = 64;
  Range elev_range{10.0, 80.0};
  Range dist_range{1.0, 1.5};
  Range azim_range{0.0, 360.0};

  bool operator==(const RenderSettings&) const = default;
};

struct RunConfig {
  int batch_size = 8;
  int steps = 5000;
  double learning_rate = 0.01;
  AdamSettings adam;
  RenderSettings render;
  GuidanceConfig guidance;
  std::optional<double> grad_clip;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

struct LossTrace {
  std::vector<double> loss;
  std::vector<double> millis;
  std::vector<std::int64_t> checkpoints;  // steps at which a checkpoint was written

  [[nodiscard]] std::size_t size() const { return loss.size(); }
  bool operator==(const LossTrace&) const = default;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<float> m;
  std::vector<float> v;

  bool operator==(const AdamState&) const = default;
};

/// Applies one Adam update to `params` and increments the step counter.
void adam_update(std::span<float> params, std::span<const double> gradient, AdamState& state,
                 const AdamSettings& settings, double learning_rate);

struct TrainState {
  TextureField field;
  AdamState adam;
  LossTrace trace;

  explicit TrainState(TextureField f) : field(std::move(f)) {}
  [[nodiscard]] std::int64_t completed_steps() const { return static_cast<std::int64_t>(trace.size()); }
};

/// One training view: where the camera is and the SDS randomness for it.
struct ViewDraw {
  CameraSample camera;
  SdsDraw sds;
};

/// Views for `step`, derived only from (seed, step, view) so that a resumed
/// run replays exactly the same stream.
std::vector<ViewDraw> draw_views(const RunConfig& config, std::int64_t step);

struct StepReport {
  double loss = 0.0;
  double gradient_norm = 0.0;  // after averaging and clipping
  bool clipped = false;
};

/// Stateful training loop. Each step renders the batch, computes per-view
/// SDS gradients, averages the parameter gradients over the batch and applies
/// exactly one optimizer update.
class Trainer {
 public:
  Trainer(const TriangleMesh& mesh, GuidanceBackend& backend, RunConfig config, TrainState state);

  StepReport step();
  StepReport step(std::span<const ViewDraw> views);

  [[nodiscard]] const TrainState& state() const { return state_; }
  [[nodiscard]] TrainState& state() { return state_; }
  [[nodiscard]] const RunConfig& config() const { return config_; }

  /// Averaged (and clipped) gradient applied by the last step.
  [[nodiscard]] std::span<const double> last_gradient() const { return gradient_; }

 private:
  const TriangleMesh& mesh_;
  GuidanceBackend& backend_;
  RunConfig config_;
  TrainState state_;
  std::vector<double> gradient_;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(std::int64_t step, const StepReport&)> on_step;
};

struct TrainResult {
  TextureField field;
  LossTrace trace;
};

/// Runs until config.steps total steps have completed. Backend failures flush
/// a checkpoint (when a path is configured) before propagating.
TrainResult train(const TriangleMesh& mesh, const TextureField& field, GuidanceBackend& backend,
                  const RunConfig& config, const TrainOptions& options = {});

/// Continues from an existing state (e.g. a loaded checkpoint).
TrainState resume_training(const TriangleMesh& mesh, TrainState state, GuidanceBackend& backend,
                           const RunConfig& config, const TrainOptions& options = {});

/// First step s >= window at which the moving average over the last `window`
/// steps (expanding at the start of the trace) improves by less than
/// `rel_tol`, relative, on the moving average `window` steps earlier.
std::optional<std::int64_t> detect_convergence(const LossTrace& trace, int window, double rel_tol);

/// Fraction of the total smoothed loss reduction achieved by step `at`.
double loss_reduction_fraction(const LossTrace& trace, std::size_t at, int window);

void write_loss_csv(const std::filesystem::path& path, const LossTrace& trace);

// Checkpoints -----------------------------------------------------------------

/// Binary layout (all little-endian):
///   "TXSDSCKP" | u32 version | u32 header_len | header JSON
///   u64 N | f32[N] parameters (level tables by level, then dense layers)
///   u64 T | T x (f64 loss, f64 millis) | u64 K | i64[K] checkpoint steps
///   u8 has_adam | [i64 step | f32[N] m | f32[N] v]
///   u32 CRC-32 of everything above
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
void save_checkpoint(const TextureField& field, const LossTrace& trace, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// Ablation sweeps ---------------------------------------------------------------

/// Canonical inspection cameras: elevation 30, azimuths 0/90/180/270.
std::vector<CameraSample> canonical_cameras(const RenderSettings& render);

/// Sets one RunConfig/GuidanceConfig field from a JSON value, e.g.
/// ("batch_size", "4") or ("elev_range", "[0, 90]"). Throws InvalidArgument
/// for unknown axes or ill-typed values.
void apply_axis(RunConfig& config, const std::string& axis, const std::string& json_value);
const std::vector<std::string>& ablation_axes();

struct AblationRun {
  std::string value;  // JSON text
  std::filesystem::path directory;
  LossTrace trace;
  std::vector<std::filesystem::path> snapshots;
  bool reused = false;  // finished result found on disk
};

struct AblationReport {
  std::string axis;
  std::vector<AblationRun> runs;
  std::filesystem::path contact_sheet;
};

struct AblationOptions {
  int parallel = 1;
};

/// One independent training run per value, all sharing the base seed. Each
/// run writes loss.csv, checkpoint.bin and four canonical snapshots into
/// out_dir/run_<i>; a run whose checkpoint already holds all steps is reused.
AblationReport run_ablation(const RunConfig& base, const FieldConfig& field_config, const std::string& axis,
                            const std::vector<std::string>& values, const TriangleMesh& mesh,
                            GuidanceBackend& backend, const std::filesystem::path& out_dir,
                            const AblationOptions& options = {});

}  // namespace texsds
