#pragma once

#include "texsds/geometry.hpp"
#include "texsds/guidance.hpp"
#include "texsds/render.hpp"

#include <memory>
#include <string>

namespace texsds {

/// Procedural surface colors used as analytic guidance targets.
struct PatternSpec {
  enum class Kind { constant, checker, waves };

  Kind kind = Kind::waves;
  Color color_a = Color(0.85, 0.35, 0.2);
  Color color_b = Color(0.2, 0.45, 0.8);
  double frequency = 1.0;  // cycles per unit length

  bool operator==(const PatternSpec&) const = default;
};

std::string pattern_kind_name(PatternSpec::Kind kind);
PatternSpec::Kind parse_pattern_kind(const std::string& name);

/// Color of the pattern at a 3D surface point.
Color evaluate_pattern(const PatternSpec& spec, const Vec3& p);

/// Renders the mesh painted with the pattern.
RenderOutput render_pattern(const TriangleMesh& mesh, const PatternSpec& spec, const CameraSample& camera,
                            int resolution, const RenderOptions& options = {});

/// Analytic backend whose per-view target is render_pattern from that view.
std::unique_ptr<AnalyticBackend> make_pattern_backend(TriangleMesh mesh, const PatternSpec& spec,
                                                      const RenderOptions& options = {});

}  // namespace texsds
