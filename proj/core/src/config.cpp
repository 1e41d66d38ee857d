#include "texsds/config.hpp"

#include "texsds/errors.hpp"

#include "json_io.hpp"

#include <fstream>
#include <sstream>

namespace texsds {

using json_io::json;
using json_io::ObjectReader;

std::filesystem::path ExperimentConfig::mesh_path() const {
  const std::filesystem::path p(mesh.path);
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void ExperimentConfig::validate() const {
  try {
    field.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("field: ") + e.what());
  }
  run.validate();
  if (bake.resolution < 64) throw ConfigError("bake.resolution must be >= 64");
  if (bake.dilation < 0) throw ConfigError("bake.dilation must be >= 0");
  if (output.turntable_views < 1) throw ConfigError("output.turntable_views must be >= 1");
  if (!(output.turntable_distance > 0.0)) throw ConfigError("output.turntable_distance must be > 0");
  if (!(analytic_target.frequency >= 0.0)) throw ConfigError("guidance.analytic_target.frequency must be >= 0");
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return mesh == o.mesh && field == o.field && run == o.run && model_id == o.model_id &&
         analytic_target == o.analytic_target && bake == o.bake && output == o.output;
}

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  ObjectReader root(doc, "");

  if (const json* mesh = root.take("mesh")) {
    ObjectReader r(*mesh, "mesh");
    r.read("path", cfg.mesh.path);
    r.read("regenerate_uvs", cfg.mesh.regenerate_uvs);
    r.finish();
  }
  if (const json* field = root.take("field")) {
    ObjectReader r(*field, "field");
    json_io::read_field(r, cfg.field);
    r.finish();
  }
  if (const json* render = root.take("render")) {
    ObjectReader r(*render, "render");
    json_io::read_render(r, cfg.run.render);
    r.finish();
  }
  if (const json* guidance = root.take("guidance")) {
    ObjectReader r(*guidance, "guidance");
    json_io::read_guidance(r, cfg.run.guidance);
    r.read("model_id", cfg.model_id);
    if (const json* target = r.take("analytic_target")) {
      ObjectReader t(*target, "guidance.analytic_target");
      std::string kind = pattern_kind_name(cfg.analytic_target.kind);
      t.read("pattern", kind);
      try {
        cfg.analytic_target.kind = parse_pattern_kind(kind);
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("guidance.analytic_target.pattern: ") + e.what());
      }
      t.read_color("color_a", cfg.analytic_target.color_a);
      t.read_color("color_b", cfg.analytic_target.color_b);
      t.read("frequency", cfg.analytic_target.frequency);
      t.finish();
    }
    r.finish();
  }
  if (const json* train = root.take("train")) {
    ObjectReader r(*train, "train");
    json_io::read_train(r, cfg.run);
    r.finish();
  }
  if (const json* bake = root.take("bake")) {
    ObjectReader r(*bake, "bake");
    r.read("resolution", cfg.bake.resolution);
    r.read("dilation", cfg.bake.dilation);
    r.finish();
  }
  if (const json* output = root.take("output")) {
    ObjectReader r(*output, "output");
    r.read("dir", cfg.output.dir);
    r.read("turntable_views", cfg.output.turntable_views);
    r.read("turntable_elevation", cfg.output.turntable_elevation);
    r.read("turntable_distance", cfg.output.turntable_distance);
    r.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_experiment_config(buffer.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  json guidance = json_io::guidance_section(cfg.run.guidance);
  guidance["model_id"] = cfg.model_id;
  guidance["analytic_target"] = {{"pattern", pattern_kind_name(cfg.analytic_target.kind)},
                                 {"color_a", json_io::color_to_json(cfg.analytic_target.color_a)},
                                 {"color_b", json_io::color_to_json(cfg.analytic_target.color_b)},
                                 {"frequency", cfg.analytic_target.frequency}};
  const json doc = {{"mesh", {{"path", cfg.mesh.path}, {"regenerate_uvs", cfg.mesh.regenerate_uvs}}},
                    {"field", json_io::to_json(cfg.field)},
                    {"render", json_io::render_section(cfg.run.render)},
                    {"guidance", guidance},
                    {"train", json_io::train_section(cfg.run)},
                    {"bake", {{"resolution", cfg.bake.resolution}, {"dilation", cfg.bake.dilation}}},
                    {"output",
                     {{"dir", cfg.output.dir},
                      {"turntable_views", cfg.output.turntable_views},
                      {"turntable_elevation", cfg.output.turntable_elevation},
                      {"turntable_distance", cfg.output.turntable_distance}}}};
  return doc.dump(2) + "\n";
}

}  // namespace texsds
