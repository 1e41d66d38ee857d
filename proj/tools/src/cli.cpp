#include "cli.hpp"

#include "texsds/baker.hpp"
#include "texsds/config.hpp"
#include "texsds/diffusion_client.hpp"
#include "texsds/errors.hpp"
#include "texsds/reference.hpp"
#include "texsds/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace texsds::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kDefaultEndpoint = "http://127.0.0.1:7860";

struct BackendChoice {
  std::string kind = "analytic";
  std::string endpoint;
};

std::string resolve_endpoint(const std::string& flag) {
  if (const char* env = std::getenv("TEXSDS_ENDPOINT"); env && *env) return env;
  return flag.empty() ? kDefaultEndpoint : flag;
}

std::unique_ptr<GuidanceBackend> make_backend(const BackendChoice& choice, const ExperimentConfig& cfg,
                                              const TriangleMesh& mesh) {
  if (choice.kind == "analytic") {
    return make_pattern_backend(mesh, cfg.analytic_target, RenderOptions{cfg.run.render.background});
  }
  auto backend = std::make_unique<DiffusionBackend>(resolve_endpoint(choice.endpoint), cfg.model_id);
  backend->info();  // fail fast on an unreachable or incompatible server
  return backend;
}

TriangleMesh prepare_mesh(const fs::path& path, bool regenerate_uvs, int bake_resolution) {
  TriangleMesh mesh = normalize_mesh(load_mesh(path));
  return regenerate_uvs ? generate_grid_atlas(std::move(mesh), bake_resolution)
                        : ensure_uv_atlas(std::move(mesh), bake_resolution);
}

std::string crc_hex(const std::string& text) {
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(text.data()),
                          static_cast<uInt>(text.size()));
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << crc;
  return s.str();
}

class Manifest {
 public:
  Manifest(fs::path dir, std::string command) : dir_(std::move(dir)) { doc_["command"] = std::move(command); }

  void add(const fs::path& artifact) { doc_["artifacts"].push_back(fs::relative(artifact, dir_).generic_string()); }
  json& operator[](const std::string& key) { return doc_[key]; }

  void write() {
    if (!doc_.contains("artifacts")) doc_["artifacts"] = json::array();
    std::ofstream out(dir_ / "manifest.json");
    out << doc_.dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir_ / "manifest.json").string());
  }

 private:
  fs::path dir_;
  json doc_;
};

std::string azimuth_tag(double azimuth) {
  std::ostringstream s;
  s << std::setw(3) << std::setfill('0') << static_cast<int>(std::lround(azimuth));
  return s.str();
}

std::vector<fs::path> write_turntable(const TriangleMesh& mesh, const TextureField& field, int views,
                                      double elevation, double distance, const RenderSettings& render,
                                      const fs::path& dir, const std::string& prefix) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (const CameraSample& cam : turntable(views, elevation, distance, render.fov_y)) {
    const fs::path path = dir / (prefix + azimuth_tag(cam.azimuth) + ".png");
    write_png(path, texsds::render(mesh, field, cam, render.resolution, RenderOptions{render.background}).rgb);
    paths.push_back(path);
  }
  return paths;
}

/// ';'-separated if any ';' is present, otherwise ','-separated outside
/// brackets. Each item is JSON, or a bare string.
std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  const bool semicolons = text.find(';') != std::string::npos;
  std::string current;
  int depth = 0;
  for (char c : text) {
    if (c == '[' || c == '{') ++depth;
    if (c == ']' || c == '}') --depth;
    if ((semicolons && c == ';') || (!semicolons && c == ',' && depth == 0)) {
      out.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  out.push_back(current);
  for (auto& v : out) {
    const auto b = v.find_first_not_of(" \t");
    const auto e = v.find_last_not_of(" \t");
    v = b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    if (v.empty()) throw InvalidArgument("--values contains an empty item");
  }
  return out;
}

int cmd_texture(const fs::path& config_path, const BackendChoice& choice, const std::string& out_flag, bool resume,
                std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const fs::path out_dir = out_flag.empty() ? fs::path(cfg.output.dir) : fs::path(out_flag);
  fs::create_directories(out_dir);
  const TriangleMesh mesh = prepare_mesh(cfg.mesh_path(), cfg.mesh.regenerate_uvs, cfg.bake.resolution);
  auto backend = make_backend(choice, cfg, mesh);

  const fs::path checkpoint = out_dir / "checkpoint.bin";
  TrainState state(TextureField(cfg.field));
  if (resume && fs::exists(checkpoint)) {
    state = load_checkpoint(checkpoint);
    if (state.field.config() != cfg.field) throw ConfigError("checkpoint field config differs from the config file");
    err << "resuming from step " << state.completed_steps() << '\n';
  }
  TrainOptions options;
  options.checkpoint_path = checkpoint;
  const int every = std::max(1, cfg.run.steps / 20);
  options.on_step = [&](std::int64_t step, const StepReport& r) {
    if ((step + 1) % every == 0 || step + 1 == cfg.run.steps) {
      err << "step " << (step + 1) << "/" << cfg.run.steps << " loss " << r.loss << '\n';
    }
  };
  state = resume_training(mesh, std::move(state), *backend, cfg.run, options);

  Manifest manifest(out_dir, "texture");
  manifest["config_crc32"] = crc_hex(serialize_experiment_config(cfg));
  manifest["steps"] = state.completed_steps();
  manifest["backend"] = choice.kind;
  {
    std::ofstream resolved(out_dir / "config.json");
    resolved << serialize_experiment_config(cfg);
  }
  manifest.add(out_dir / "config.json");
  manifest.add(checkpoint);

  write_loss_csv(out_dir / "loss.csv", state.trace);
  manifest.add(out_dir / "loss.csv");
  write_png(out_dir / "loss.png", plot_series(state.trace.loss));
  manifest.add(out_dir / "loss.png");

  const BakedTexture baked = bake(mesh, state.field, cfg.bake.resolution, cfg.bake.dilation);
  const ExportedFiles files = export_textured_mesh(mesh, baked, out_dir);
  manifest.add(files.obj);
  manifest.add(files.mtl);
  manifest.add(files.texture);

  for (const auto& p : write_turntable(mesh, state.field, cfg.output.turntable_views, cfg.output.turntable_elevation,
                                       cfg.output.turntable_distance, cfg.run.render, out_dir / "snapshots",
                                       "turntable_az")) {
    manifest.add(p);
  }
  manifest.write();
  out << "wrote " << (out_dir / "texture.png").string() << '\n';
  return kOk;
}

int cmd_ablate(const fs::path& config_path, const BackendChoice& choice, const std::string& axis,
               const std::string& values_text, const std::string& out_flag, int parallel, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const auto& axes = ablation_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    throw InvalidArgument("unknown ablation axis '" + axis + "'");
  }
  if (values_text.empty()) throw InvalidArgument("--values must list at least one value");
  const auto values = split_values(values_text);
  const fs::path out_dir = out_flag.empty() ? fs::path(cfg.output.dir) / ("ablate_" + axis) : fs::path(out_flag);

  const TriangleMesh mesh = prepare_mesh(cfg.mesh_path(), cfg.mesh.regenerate_uvs, cfg.bake.resolution);
  auto backend = make_backend(choice, cfg, mesh);
  const AblationReport report =
      run_ablation(cfg.run, cfg.field, axis, values, mesh, *backend, out_dir, AblationOptions{parallel});

  Manifest manifest(out_dir, "ablate");
  manifest["config_crc32"] = crc_hex(serialize_experiment_config(cfg));
  manifest["axis"] = axis;
  manifest["values"] = values;
  for (const auto& run : report.runs) {
    manifest.add(run.directory / "loss.csv");
    manifest.add(run.directory / "checkpoint.bin");
    for (const auto& s : run.snapshots) manifest.add(s);
    out << run.directory.filename().string() << " " << run.value << (run.reused ? " (reused)" : "") << '\n';
  }
  manifest.add(report.contact_sheet);
  manifest.write();
  return kOk;
}

int cmd_preview(const fs::path& mesh_path, const fs::path& checkpoint, int views, double elevation, double distance,
                int resolution, const std::string& out_dir_flag, std::ostream& out) {
  if (views < 1) throw InvalidArgument("--views must be >= 1");
  if (resolution < 1) throw InvalidArgument("--resolution must be >= 1");
  const TriangleMesh mesh = normalize_mesh(load_mesh(mesh_path));
  const TrainState state = load_checkpoint(checkpoint);
  const fs::path out_dir = out_dir_flag.empty() ? fs::path("preview") : fs::path(out_dir_flag);
  RenderSettings render;
  render.resolution = resolution;
  Manifest manifest(out_dir, "preview");
  for (const auto& p : write_turntable(mesh, state.field, views, elevation, distance, render, out_dir, "view_az")) {
    manifest.add(p);
    out << p.string() << '\n';
  }
  manifest.write();
  return kOk;
}

int cmd_bake(const fs::path& mesh_path, const fs::path& checkpoint, int resolution, int dilation,
             bool regenerate_uvs, const std::string& out_dir_flag, std::ostream& out) {
  const TriangleMesh mesh = prepare_mesh(mesh_path, regenerate_uvs, resolution);
  const TrainState state = load_checkpoint(checkpoint);
  const fs::path out_dir = out_dir_flag.empty() ? fs::path("baked") : fs::path(out_dir_flag);
  const BakedTexture baked = bake(mesh, state.field, resolution, dilation);
  const ExportedFiles files = export_textured_mesh(mesh, baked, out_dir);
  Manifest manifest(out_dir, "bake");
  manifest.add(files.obj);
  manifest.add(files.mtl);
  manifest.add(files.texture);
  manifest.write();
  out << "wrote " << files.texture.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-to-texture optimization with score distillation", "texsds"};
  app.require_subcommand(1);

  BackendChoice choice;
  std::string out_dir;
  auto add_backend_flags = [&](CLI::App* cmd) {
    cmd->add_option("--backend", choice.kind, "Guidance backend")
        ->check(CLI::IsMember({"analytic", "diffusion"}))
        ->capture_default_str();
    cmd->add_option("--endpoint", choice.endpoint, "Diffusion service URL (TEXSDS_ENDPOINT overrides)");
  };

  std::string config_path;
  bool resume = false;
  auto* texture = app.add_subcommand("texture", "Optimize a texture for a mesh and export it");
  texture->add_option("config", config_path, "Experiment config (JSON)")->required();
  add_backend_flags(texture);
  texture->add_option("--out", out_dir, "Output directory (default: output.dir from the config)");
  texture->add_flag("--resume", resume, "Continue from <out>/checkpoint.bin if present");

  std::string axis, values;
  int parallel = 1;
  auto* ablate = app.add_subcommand("ablate", "Sweep one hyperparameter");
  ablate->add_option("config", config_path, "Experiment config (JSON)")->required();
  ablate->add_option("--axis", axis, "Parameter to vary")->required();
  ablate->add_option("--values", values, "Comma- or semicolon-separated JSON values")->required();
  add_backend_flags(ablate);
  ablate->add_option("--out", out_dir, "Output directory");
  ablate->add_option("--parallel", parallel, "Concurrent runs")->capture_default_str();

  std::string mesh_path, checkpoint;
  int views = 8, resolution = 512;
  double elevation = 30.0, distance = 1.5;
  auto* preview = app.add_subcommand("preview", "Render turntable views from a checkpoint");
  preview->add_option("mesh", mesh_path, "Mesh (OBJ)")->required();
  preview->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  preview->add_option("--views", views, "Number of evenly spaced azimuths")->capture_default_str();
  preview->add_option("--elevation", elevation, "Camera elevation in degrees")->capture_default_str();
  preview->add_option("--distance", distance, "Camera distance")->capture_default_str();
  preview->add_option("--resolution", resolution, "Image size in pixels")->capture_default_str();
  preview->add_option("--out", out_dir, "Output directory (default: preview)");

  int bake_resolution = kDefaultBakeResolution, dilation = kDefaultDilation;
  bool regenerate_uvs = false;
  auto* bake_cmd = app.add_subcommand("bake", "Bake a checkpoint into a UV texture");
  bake_cmd->add_option("mesh", mesh_path, "Mesh (OBJ)")->required();
  bake_cmd->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  bake_cmd->add_option("--resolution", bake_resolution, "Texture size")->capture_default_str();
  bake_cmd->add_option("--dilation", dilation, "Seam dilation in texels")->capture_default_str();
  bake_cmd->add_flag("--regenerate-uvs", regenerate_uvs, "Replace existing UVs with the grid atlas");
  bake_cmd->add_option("--out", out_dir, "Output directory (default: baked)");

  std::string show_path;
  auto* config_cmd = app.add_subcommand("config", "Print the resolved config (defaults when no file is given)");
  config_cmd->add_option("config", show_path, "Experiment config (JSON)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*texture) return cmd_texture(config_path, choice, out_dir, resume, out, err);
    if (*ablate) return cmd_ablate(config_path, choice, axis, values, out_dir, parallel, out);
    if (*preview) return cmd_preview(mesh_path, checkpoint, views, elevation, distance, resolution, out_dir, out);
    if (*bake_cmd) return cmd_bake(mesh_path, checkpoint, bake_resolution, dilation, regenerate_uvs, out_dir, out);
    if (*config_cmd) {
      out << serialize_experiment_config(show_path.empty() ? ExperimentConfig{} : load_experiment_config(show_path));
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kConfig;
  } catch (const MeshError& e) {
    err << "mesh error: " << e.what() << '\n';
    return kMesh;
  } catch (const AtlasError& e) {
    err << "atlas error: " << e.what() << '\n';
    return kMesh;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kMesh;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackend;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << '\n';
    return kBackend;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kUnexpected;
}

}  // namespace texsds::cli
