#include "json_io.hpp"

namespace texsds::json_io {

ObjectReader::ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) throw ConfigError("'" + (path_.empty() ? std::string("<root>") : path_) + "' must be an object");
}

const json* ObjectReader::take(const std::string& key) {
  used_.insert(key);
  const auto it = object_.find(key);
  return it == object_.end() ? nullptr : &*it;
}

std::string ObjectReader::qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

void ObjectReader::finish() const {
  for (const auto& [key, value] : object_.items()) {
    if (!used_.count(key)) throw ConfigError("unknown key '" + qualified(key) + "'");
  }
}

void ObjectReader::read_range(const std::string& key, Range& out) {
  const json* value = take(key);
  if (!value) return;
  if (!value->is_array() || value->size() != 2 || !(*value)[0].is_number() || !(*value)[1].is_number()) {
    throw ConfigError("'" + qualified(key) + "' must be a [lo, hi] pair of numbers");
  }
  out = {(*value)[0].get<double>(), (*value)[1].get<double>()};
}

void ObjectReader::read_color(const std::string& key, Color& out) {
  const json* value = take(key);
  if (!value) return;
  if (!value->is_array() || value->size() != 3) throw ConfigError("'" + qualified(key) + "' must be [r, g, b]");
  for (int c = 0; c < 3; ++c) {
    if (!(*value)[c].is_number()) throw ConfigError("'" + qualified(key) + "' must be [r, g, b]");
    out[c] = (*value)[c].get<double>();
  }
}

void ObjectReader::read_optional(const std::string& key, std::optional<double>& out) {
  const json* value = take(key);
  if (!value) return;
  if (value->is_null()) {
    out.reset();
  } else if (value->is_number()) {
    out = value->get<double>();
  } else {
    throw ConfigError("'" + qualified(key) + "' must be a number or null");
  }
}

json range_to_json(const Range& r) { return json::array({r.lo, r.hi}); }
json color_to_json(const Color& c) { return json::array({c.x(), c.y(), c.z()}); }

json to_json(const FieldConfig& c) {
  return {{"num_levels", c.num_levels},
          {"features_per_level", c.features_per_level},
          {"log2_table_size", c.log2_table_size},
          {"base_resolution", c.base_resolution},
          {"finest_resolution", c.finest_resolution},
          {"mlp_hidden_width", c.mlp_hidden_width},
          {"mlp_hidden_layers", c.mlp_hidden_layers},
          {"seed", c.seed}};
}

void read_field(ObjectReader& r, FieldConfig& c) {
  r.read("num_levels", c.num_levels);
  r.read("features_per_level", c.features_per_level);
  r.read("log2_table_size", c.log2_table_size);
  r.read("base_resolution", c.base_resolution);
  r.read("finest_resolution", c.finest_resolution);
  r.read("mlp_hidden_width", c.mlp_hidden_width);
  r.read("mlp_hidden_layers", c.mlp_hidden_layers);
  r.read("seed", c.seed);
}

json train_section(const RunConfig& c) {
  return {{"batch_size", c.batch_size},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"grad_clip", c.grad_clip ? json(*c.grad_clip) : json(nullptr)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

void read_train(ObjectReader& r, RunConfig& c) {
  r.read("batch_size", c.batch_size);
  r.read("steps", c.steps);
  r.read("learning_rate", c.learning_rate);
  if (const json* adam = r.take("adam")) {
    ObjectReader ar(*adam, r.qualified("adam"));
    ar.read("beta1", c.adam.beta1);
    ar.read("beta2", c.adam.beta2);
    ar.read("epsilon", c.adam.epsilon);
    ar.finish();
  }
  r.read_optional("grad_clip", c.grad_clip);
  r.read("seed", c.seed);
  r.read("checkpoint_every", c.checkpoint_every);
}

json render_section(const RenderSettings& s) {
  return {{"resolution", s.resolution},
          {"fov_y", s.fov_y},
          {"background", color_to_json(s.background)},
          {"depth_resolution", s.depth_resolution},
          {"elev_range", range_to_json(s.elev_range)},
          {"dist_range", range_to_json(s.dist_range)},
          {"azim_range", range_to_json(s.azim_range)}};
}

void read_render(ObjectReader& r, RenderSettings& s) {
  r.read("resolution", s.resolution);
  r.read("fov_y", s.fov_y);
  r.read_color("background", s.background);
  r.read("depth_resolution", s.depth_resolution);
  r.read_range("elev_range", s.elev_range);
  r.read_range("dist_range", s.dist_range);
  r.read_range("azim_range", s.azim_range);
}

std::string weighting_name(Weighting w) { return w == Weighting::sigma_sq ? "sigma_sq" : "uniform"; }

Weighting parse_weighting(const std::string& name) {
  if (name == "uniform") return Weighting::uniform;
  if (name == "sigma_sq") return Weighting::sigma_sq;
  throw ConfigError("weighting must be 'uniform' or 'sigma_sq', got '" + name + "'");
}

json guidance_section(const GuidanceConfig& g) {
  return {{"prompt", g.prompt},
          {"negative_prompt", g.negative_prompt},
          {"guidance_scale", g.guidance_scale},
          {"t_range", range_to_json(g.t_range)},
          {"weighting", weighting_name(g.weighting)}};
}

void read_guidance(ObjectReader& r, GuidanceConfig& g) {
  r.read("prompt", g.prompt);
  r.read("negative_prompt", g.negative_prompt);
  r.read("guidance_scale", g.guidance_scale);
  r.read_range("t_range", g.t_range);
  std::string weighting = weighting_name(g.weighting);
  r.read("weighting", weighting);
  g.weighting = parse_weighting(weighting);
}

}  // namespace texsds::json_io
