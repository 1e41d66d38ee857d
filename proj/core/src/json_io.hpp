#pragma once

#include "texsds/errors.hpp"
#include "texsds/trainer.hpp"

#include <json.hpp>

#include <set>
#include <string>
#include <type_traits>

namespace texsds::json_io {

using nlohmann::json;

/// Strict reader for one JSON object: every key must be consumed, otherwise
/// finish() reports the first unknown one by its dotted path.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path);

  template <typename T>
  void read(const std::string& key, T& out) {
    const json* value = take(key);
    if (!value) return;
    bool typed = true;
    if constexpr (std::is_same_v<T, bool>) {
      typed = value->is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      typed = value->is_number_integer() && !(std::is_unsigned_v<T> && value->is_number_integer() &&
                                              !value->is_number_unsigned() && value->template get<long long>() < 0);
    } else if constexpr (std::is_floating_point_v<T>) {
      typed = value->is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
      typed = value->is_string();
    }
    if (!typed) throw ConfigError("invalid value for '" + qualified(key) + "': " + value->dump());
    try {
      out = value->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("invalid value for '" + qualified(key) + "': " + value->dump());
    }
  }

  void read_range(const std::string& key, Range& out);
  void read_color(const std::string& key, Color& out);
  void read_optional(const std::string& key, std::optional<double>& out);

  /// Returns the nested object (or nullptr) and marks the key as used.
  const json* take(const std::string& key);
  [[nodiscard]] std::string qualified(const std::string& key) const;
  void finish() const;

 private:
  const json& object_;
  std::string path_;
  std::set<std::string> used_;
};

json range_to_json(const Range& r);
json color_to_json(const Color& c);

json to_json(const FieldConfig& config);
void read_field(ObjectReader& reader, FieldConfig& config);

json train_section(const RunConfig& config);
void read_train(ObjectReader& reader, RunConfig& config);

json render_section(const RenderSettings& render);
void read_render(ObjectReader& reader, RenderSettings& render);

json guidance_section(const GuidanceConfig& guidance);
void read_guidance(ObjectReader& reader, GuidanceConfig& guidance);

std::string weighting_name(Weighting w);
Weighting parse_weighting(const std::string& name);

}  // namespace texsds::json_io
