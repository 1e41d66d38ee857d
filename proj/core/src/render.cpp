#include "texsds/render.hpp"

#include "texsds/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace texsds {
namespace {

struct ClipVertex {
  Vec3 camera;  // camera-space position
  Vec3 bary;    // barycentric coordinates in the source triangle
};

// Sutherland-Hodgman against z >= near. A triangle yields at most 4 vertices.
int clip_near(const std::array<ClipVertex, 3>& in, std::array<ClipVertex, 4>& out) {
  int count = 0;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = in[i];
    const ClipVertex& b = in[(i + 1) % 3];
    const bool a_in = a.camera.z() >= kNearPlane;
    const bool b_in = b.camera.z() >= kNearPlane;
    if (a_in) out[count++] = a;
    if (a_in != b_in) {
      const double t = (kNearPlane - a.camera.z()) / (b.camera.z() - a.camera.z());
      ClipVertex v{a.camera + t * (b.camera - a.camera), a.bary + t * (b.bary - a.bary)};
      v.camera.z() = kNearPlane;
      out[count++] = v;
    }
  }
  return count;
}

double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

}  // namespace

Rasterization rasterize(const TriangleMesh& mesh, const CameraSample& camera, int resolution) {
  if (resolution < 1) throw InvalidArgument("render resolution must be positive");
  const CameraFrame frame = make_frame(camera);
  Rasterization raster;
  raster.resolution = resolution;
  raster.fragments.assign(static_cast<std::size_t>(resolution) * resolution, Fragment{});
  std::vector<double> zbuffer(raster.fragments.size(), std::numeric_limits<double>::infinity());

  const double half = 0.5 * resolution;
  auto to_screen = [&](const Vec3& c) {
    return Vec2(half * (1.0 + c.x() / (c.z() * frame.tan_half_fov)),
                half * (1.0 - c.y() / (c.z() * frame.tan_half_fov)));
  };

  std::array<ClipVertex, 4> clipped;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const std::array<ClipVertex, 3> tri{
        ClipVertex{frame.to_camera(mesh.corner_position(f, 0)), Vec3::UnitX()},
        ClipVertex{frame.to_camera(mesh.corner_position(f, 1)), Vec3::UnitY()},
        ClipVertex{frame.to_camera(mesh.corner_position(f, 2)), Vec3::UnitZ()},
    };
    const int n = clip_near(tri, clipped);
    for (int k = 1; k + 1 < n; ++k) {
      const std::array<const ClipVertex*, 3> v{&clipped[0], &clipped[k], &clipped[k + 1]};
      const std::array<Vec2, 3> s{to_screen(v[0]->camera), to_screen(v[1]->camera), to_screen(v[2]->camera)};
      const double area = edge(s[0], s[1], s[2]);
      if (std::abs(area) < 1e-14) continue;

      const double min_x = std::min({s[0].x(), s[1].x(), s[2].x()});
      const double max_x = std::max({s[0].x(), s[1].x(), s[2].x()});
      const double min_y = std::min({s[0].y(), s[1].y(), s[2].y()});
      const double max_y = std::max({s[0].y(), s[1].y(), s[2].y()});
      const double lim = resolution + 1.0;
      const int x0 = std::max(0, static_cast<int>(std::ceil(std::clamp(min_x - 0.5, -1.0, lim))));
      const int x1 = std::min(resolution - 1, static_cast<int>(std::floor(std::clamp(max_x - 0.5, -1.0, lim))));
      const int y0 = std::max(0, static_cast<int>(std::ceil(std::clamp(min_y - 0.5, -1.0, lim))));
      const int y1 = std::min(resolution - 1, static_cast<int>(std::floor(std::clamp(max_y - 0.5, -1.0, lim))));

      const Vec3 inv_z(1.0 / v[0]->camera.z(), 1.0 / v[1]->camera.z(), 1.0 / v[2]->camera.z());
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Vec2 p(x + 0.5, y + 0.5);
          const double l0 = edge(s[1], s[2], p) / area;
          const double l1 = edge(s[2], s[0], p) / area;
          const double l2 = edge(s[0], s[1], p) / area;
          if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;

          // Perspective-correct interpolation: 1/z is affine in screen space.
          const Vec3 w(l0 * inv_z[0], l1 * inv_z[1], l2 * inv_z[2]);
          const double z = 1.0 / w.sum();
          const std::size_t idx = static_cast<std::size_t>(y) * resolution + x;
          if (!(z < zbuffer[idx])) continue;
          zbuffer[idx] = z;

          const Vec3 persp = w * z;
          Vec3 bary = persp[0] * v[0]->bary + persp[1] * v[1]->bary + persp[2] * v[2]->bary;
          Fragment& frag = raster.fragments[idx];
          frag.triangle = static_cast<std::int32_t>(f);
          frag.barycentric = bary;
          frag.position = bary[0] * mesh.corner_position(f, 0) + bary[1] * mesh.corner_position(f, 1) +
                          bary[2] * mesh.corner_position(f, 2);
          frag.depth = z;
        }
      }
    }
  }
  return raster;
}

RenderOutput shade(Rasterization raster, const std::function<Color(const Fragment&)>& color_of,
                   const RenderOptions& options) {
  RenderOutput out;
  out.resolution = raster.resolution;
  const int res = raster.resolution;
  out.rgb = Image(res, res, 3);
  out.depth.assign(raster.fragments.size(), 0.0f);
  out.mask.assign(raster.fragments.size(), 0);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * res + x;
      const Fragment& frag = raster.fragments[idx];
      if (frag.covered()) {
        out.rgb.set_rgb(x, y, color_of(frag));
        out.depth[idx] = static_cast<float>(frag.depth);
        out.mask[idx] = out.depth[idx] > 0.0f ? 1 : 0;
      } else {
        out.rgb.set_rgb(x, y, options.background);
      }
    }
  }
  out.raster = std::move(raster);
  return out;
}

RenderOutput render(const TriangleMesh& mesh, const TextureField& field, const CameraSample& camera, int resolution,
                    const RenderOptions& options) {
  FieldEvaluator eval(field);
  return shade(rasterize(mesh, camera, resolution), [&](const Fragment& f) { return eval.query(f.position); },
               options);
}

RenderOutput render_textured(const TriangleMesh& mesh, const Image& texture, const CameraSample& camera,
                             int resolution, const RenderOptions& options) {
  if (!mesh.has_uvs()) throw InvalidArgument("render_textured: mesh has no UVs");
  return shade(
      rasterize(mesh, camera, resolution),
      [&](const Fragment& f) {
        const auto tri = static_cast<std::size_t>(f.triangle);
        const Vec2 uv = f.barycentric[0] * mesh.corner_uv(tri, 0) + f.barycentric[1] * mesh.corner_uv(tri, 1) +
                        f.barycentric[2] * mesh.corner_uv(tri, 2);
        return sample_bilinear(texture, uv);
      },
      options);
}

void render_backward(const TextureField& field, const RenderOutput& output, const Image& d_rgb,
                     std::span<double> gradient, double scale) {
  const int res = output.resolution;
  if (d_rgb.width != res || d_rgb.height != res || d_rgb.channels != 3) {
    throw InvalidArgument("render_backward: gradient image shape mismatch");
  }
  FieldEvaluator eval(field);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * res + x;
      if (!output.mask[idx]) continue;
      const Color g = scale * d_rgb.rgb(x, y);
      if (g.isZero(0.0)) continue;
      eval.accumulate_gradient(output.raster.fragments[idx].position, g, gradient);
    }
  }
}

std::vector<float> area_resample(std::span<const float> source, int source_size, int target_size) {
  if (source_size < 1 || target_size < 1) throw InvalidArgument("area_resample: sizes must be positive");
  if (source.size() != static_cast<std::size_t>(source_size) * source_size) {
    throw InvalidArgument("area_resample: source size mismatch");
  }
  // 1D overlap weights between target cell i and source cell j, normalized so
  // that each target row sums to one.
  const double ratio = static_cast<double>(source_size) / target_size;
  std::vector<std::vector<std::pair<int, double>>> weights(static_cast<std::size_t>(target_size));
  for (int i = 0; i < target_size; ++i) {
    const double lo = i * ratio;
    const double hi = (i + 1) * ratio;
    for (int j = static_cast<int>(std::floor(lo)); j < source_size && j < hi; ++j) {
      const double overlap = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
      if (overlap > 0.0) weights[i].emplace_back(j, overlap / ratio);
    }
  }

  std::vector<double> rows(static_cast<std::size_t>(target_size) * source_size, 0.0);
  for (int y = 0; y < source_size; ++y) {
    for (int i = 0; i < target_size; ++i) {
      double acc = 0.0;
      for (const auto& [j, w] : weights[i]) acc += w * source[static_cast<std::size_t>(y) * source_size + j];
      rows[static_cast<std::size_t>(y) * target_size + i] = acc;
    }
  }
  std::vector<float> out(static_cast<std::size_t>(target_size) * target_size, 0.0f);
  for (int i = 0; i < target_size; ++i) {
    for (int x = 0; x < target_size; ++x) {
      double acc = 0.0;
      for (const auto& [j, w] : weights[i]) acc += w * rows[static_cast<std::size_t>(j) * target_size + x];
      out[static_cast<std::size_t>(i) * target_size + x] = static_cast<float>(acc);
    }
  }
  return out;
}

DepthCondition prepare_depth_condition(const RenderOutput& output, int target_size) {
  if (target_size < 1) throw InvalidArgument("depth condition size must be positive");
  DepthCondition cond;
  cond.size = target_size;
  cond.values.assign(static_cast<std::size_t>(target_size) * target_size, 0.0f);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < output.depth.size(); ++i) {
    if (!output.mask[i]) continue;
    const double disparity = 1.0 / output.depth[i];
    lo = std::min(lo, disparity);
    hi = std::max(hi, disparity);
  }
  if (!std::isfinite(lo) || !(hi > lo)) return cond;

  std::vector<float> normalized(output.depth.size());
  for (std::size_t i = 0; i < output.depth.size(); ++i) {
    const double disparity = output.mask[i] ? 1.0 / output.depth[i] : lo;
    normalized[i] = static_cast<float>(2.0 * (disparity - lo) / (hi - lo) - 1.0);
  }
  cond.values = area_resample(normalized, output.resolution, target_size);
  return cond;
}

Image depth_preview(const RenderOutput& output) {
  Image img(output.resolution, output.resolution, 1);
  float lo = std::numeric_limits<float>::infinity();
  float hi = 0.0f;
  for (std::size_t i = 0; i < output.depth.size(); ++i) {
    if (!output.mask[i]) continue;
    lo = std::min(lo, output.depth[i]);
    hi = std::max(hi, output.depth[i]);
  }
  for (std::size_t i = 0; i < output.depth.size(); ++i) {
    if (!output.mask[i]) continue;
    img.data[i] = hi > lo ? 1.0f - 0.8f * (output.depth[i] - lo) / (hi - lo) : 1.0f;
  }
  return img;
}

Image mask_preview(const RenderOutput& output) {
  Image img(output.resolution, output.resolution, 1);
  for (std::size_t i = 0; i < output.mask.size(); ++i) img.data[i] = output.mask[i] ? 1.0f : 0.0f;
  return img;
}

}  // namespace texsds
