#include "texsds/reference.hpp"

#include "texsds/errors.hpp"

#include <cmath>
#include <numbers>

namespace texsds {

std::string pattern_kind_name(PatternSpec::Kind kind) {
  switch (kind) {
    case PatternSpec::Kind::constant:
      return "constant";
    case PatternSpec::Kind::checker:
      return "checker";
    case PatternSpec::Kind::waves:
      return "waves";
  }
  return "waves";
}

PatternSpec::Kind parse_pattern_kind(const std::string& name) {
  if (name == "constant") return PatternSpec::Kind::constant;
  if (name == "checker") return PatternSpec::Kind::checker;
  if (name == "waves") return PatternSpec::Kind::waves;
  throw InvalidArgument("unknown pattern '" + name + "' (expected constant, checker or waves)");
}

Color evaluate_pattern(const PatternSpec& spec, const Vec3& p) {
  double mix = 0.0;
  switch (spec.kind) {
    case PatternSpec::Kind::constant:
      return spec.color_a;
    case PatternSpec::Kind::checker: {
      const Vec3 q = spec.frequency * (p + Vec3::Ones());
      const auto parity = static_cast<long long>(std::floor(q.x()) + std::floor(q.y()) + std::floor(q.z()));
      mix = (parity % 2 == 0) ? 0.0 : 1.0;
      break;
    }
    case PatternSpec::Kind::waves: {
      const double w = 2.0 * std::numbers::pi * spec.frequency;
      mix = 0.5 + 0.5 * std::sin(w * p.x()) * std::cos(w * p.y()) * std::cos(w * 0.5 * p.z());
      break;
    }
  }
  return (1.0 - mix) * spec.color_a + mix * spec.color_b;
}

RenderOutput render_pattern(const TriangleMesh& mesh, const PatternSpec& spec, const CameraSample& camera,
                            int resolution, const RenderOptions& options) {
  return shade(rasterize(mesh, camera, resolution),
               [&](const Fragment& f) { return evaluate_pattern(spec, f.position); }, options);
}

std::unique_ptr<AnalyticBackend> make_pattern_backend(TriangleMesh mesh, const PatternSpec& spec,
                                                      const RenderOptions& options) {
  auto shared = std::make_shared<const TriangleMesh>(std::move(mesh));
  return std::make_unique<AnalyticBackend>(
      [shared, spec, options](const CameraSample& view, int resolution) {
        return render_pattern(*shared, spec, view, resolution, options).rgb;
      });
}

}  // namespace texsds
