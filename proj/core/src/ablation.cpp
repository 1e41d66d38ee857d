#include "texsds/errors.hpp"
#include "texsds/trainer.hpp"

#include "json_io.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace texsds {
namespace {

using nlohmann::json;

enum class Section { train, adam, render, guidance };

const std::map<std::string, Section>& axis_sections() {
  static const std::map<std::string, Section> axes{
      {"batch_size", Section::train},       {"steps", Section::train},
      {"learning_rate", Section::train},    {"grad_clip", Section::train},
      {"seed", Section::train},             {"beta1", Section::adam},
      {"beta2", Section::adam},             {"epsilon", Section::adam},
      {"resolution", Section::render},      {"fov_y", Section::render},
      {"depth_resolution", Section::render}, {"elev_range", Section::render},
      {"dist_range", Section::render},      {"azim_range", Section::render},
      {"background", Section::render},      {"prompt", Section::guidance},
      {"negative_prompt", Section::guidance}, {"guidance_scale", Section::guidance},
      {"t_range", Section::guidance},       {"weighting", Section::guidance},
  };
  return axes;
}

std::string slug(double azimuth) { return std::to_string(static_cast<int>(std::lround(azimuth))); }

}  // namespace

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, section] : axis_sections()) out.push_back(name);
    return out;
  }();
  return names;
}

void apply_axis(RunConfig& config, const std::string& axis, const std::string& json_value) {
  const auto it = axis_sections().find(axis);
  if (it == axis_sections().end()) throw InvalidArgument("unknown ablation axis '" + axis + "'");
  json value;
  try {
    value = json::parse(json_value);
  } catch (const json::exception&) {
    value = json_value;  // bare strings such as sigma_sq
  }
  try {
    switch (it->second) {
      case Section::train:
      case Section::adam: {
        json section = json_io::train_section(config);
        if (it->second == Section::adam) {
          section["adam"][axis] = value;
        } else {
          section[axis] = value;
        }
        json_io::ObjectReader r(section, "train");
        json_io::read_train(r, config);
        r.finish();
        break;
      }
      case Section::render: {
        json section = json_io::render_section(config.render);
        section[axis] = value;
        json_io::ObjectReader r(section, "render");
        json_io::read_render(r, config.render);
        r.finish();
        break;
      }
      case Section::guidance: {
        json section = json_io::guidance_section(config.guidance);
        section[axis] = value;
        json_io::ObjectReader r(section, "guidance");
        json_io::read_guidance(r, config.guidance);
        r.finish();
        break;
      }
    }
  } catch (const ConfigError& e) {
    throw InvalidArgument(std::string(e.what()));
  }
}

std::vector<CameraSample> canonical_cameras(const RenderSettings& render) {
  std::vector<CameraSample> cams;
  for (double azimuth : {0.0, 90.0, 180.0, 270.0}) {
    CameraSample c;
    c.elevation = 30.0;
    c.azimuth = azimuth;
    c.distance = render.dist_range.mid();
    c.fov_y = render.fov_y;
    cams.push_back(c);
  }
  return cams;
}

AblationReport run_ablation(const RunConfig& base, const FieldConfig& field_config, const std::string& axis,
                            const std::vector<std::string>& values, const TriangleMesh& mesh,
                            GuidanceBackend& backend, const std::filesystem::path& out_dir,
                            const AblationOptions& options) {
  if (values.empty()) throw InvalidArgument("ablation needs at least one value");
  if (options.parallel < 1) throw InvalidArgument("parallel must be >= 1");

  std::vector<RunConfig> configs;
  for (const auto& value : values) {
    RunConfig cfg = base;
    apply_axis(cfg, axis, value);
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw InvalidArgument("ablation value " + value + " for '" + axis + "': " + e.what());
    }
    configs.push_back(std::move(cfg));
  }

  AblationReport report;
  report.axis = axis;
  report.runs.resize(values.size());
  std::filesystem::create_directories(out_dir);

  auto run_one = [&](std::size_t i) {
    AblationRun& run = report.runs[i];
    const RunConfig& cfg = configs[i];
    run.value = values[i];
    run.directory = out_dir / ("run_" + std::to_string(i));
    std::filesystem::create_directories(run.directory);
    const auto checkpoint = run.directory / "checkpoint.bin";

    std::optional<TrainState> state;
    if (std::filesystem::exists(checkpoint)) {
      try {
        TrainState loaded = load_checkpoint(checkpoint);
        if (loaded.field.config() == field_config) state.emplace(std::move(loaded));
      } catch (const CheckpointError&) {
        // unusable leftovers are retrained from scratch
      }
    }
    if (state && state->completed_steps() >= cfg.steps) {
      run.reused = true;
    } else {
      if (!state) state.emplace(TextureField(field_config));
      TrainOptions train_options;
      train_options.checkpoint_path = checkpoint;
      state.emplace(resume_training(mesh, std::move(*state), backend, cfg, train_options));
    }
    run.trace = state->trace;

    {
      std::ofstream meta(run.directory / "config.json");
      meta << json{{"axis", axis},
                   {"value", json::parse(run.value, nullptr, false).is_discarded() ? json(run.value)
                                                                                  : json::parse(run.value)},
                   {"train", json_io::train_section(cfg)},
                   {"render", json_io::render_section(cfg.render)},
                   {"guidance", json_io::guidance_section(cfg.guidance)},
                   {"field", json_io::to_json(field_config)}}
                  .dump(2)
           << '\n';
    }
    write_loss_csv(run.directory / "loss.csv", run.trace);
    const RenderOptions render_options{cfg.render.background};
    for (const auto& cam : canonical_cameras(cfg.render)) {
      const auto path = run.directory / ("snapshot_az" + slug(cam.azimuth) + ".png");
      write_png(path, render(mesh, state->field, cam, cfg.render.resolution, render_options).rgb);
      run.snapshots.push_back(path);
    }
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) {
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        run_one(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(options.parallel, static_cast<int>(values.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<Image> tiles;
  for (const auto& run : report.runs) {
    for (const auto& snap : run.snapshots) tiles.push_back(read_png(snap));
  }
  report.contact_sheet = out_dir / "contact_sheet.png";
  write_png(report.contact_sheet, contact_sheet(tiles, 4));
  return report;
}

}  // namespace texsds
