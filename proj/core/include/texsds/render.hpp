#pragma once

#include "texsds/camera.hpp"
#include "texsds/geometry.hpp"
#include "texsds/image.hpp"
#include "texsds/texfield.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace texsds {

/// Geometry closer to the eye than this (camera-space z) is clipped.
inline constexpr double kNearPlane = 1e-3;

/// Visible surface sample behind one pixel.
struct Fragment {
  std::int32_t triangle = -1;
  Vec3 barycentric = Vec3::Zero();
  Vec3 position = Vec3::Zero();
  double depth = 0.0;  // camera-space z

  [[nodiscard]] bool covered() const { return triangle >= 0; }
};

/// Per-pixel visibility of a mesh from one camera (square image).
struct Rasterization {
  int resolution = 0;
  std::vector<Fragment> fragments;
};

/// Z-buffered perspective rasterization with near-plane clipping and
/// perspective-correct barycentrics. Pixel centers are sampled; coverage is
/// inclusive on triangle edges.
Rasterization rasterize(const TriangleMesh& mesh, const CameraSample& camera, int resolution);

struct RenderOutput {
  int resolution = 0;
  Image rgb;                        // resolution^2 x 3
  std::vector<float> depth;         // camera-space z, 0 on background
  std::vector<std::uint8_t> mask;   // 1 where depth > 0
  Rasterization raster;             // kept for the backward pass
};

struct RenderOptions {
  Color background = Color::Constant(0.5);
};

/// Shades every covered fragment with `color_of(fragment)`.
RenderOutput shade(Rasterization raster, const std::function<Color(const Fragment&)>& color_of,
                   const RenderOptions& options = {});

/// Renders the textured mesh by querying the field at each visible surface
/// point. Geometry is constant, so the only gradients are with respect to
/// field parameters (see render_backward).
RenderOutput render(const TriangleMesh& mesh, const TextureField& field, const CameraSample& camera, int resolution,
                    const RenderOptions& options = {});

/// Renders using a UV texture with bilinear filtering.
RenderOutput render_textured(const TriangleMesh& mesh, const Image& texture, const CameraSample& camera,
                             int resolution, const RenderOptions& options = {});

/// Accumulates d(loss)/d(field params) = J^T d_rgb into `gradient` (scaled by
/// `scale`). Background pixels contribute nothing.
void render_backward(const TextureField& field, const RenderOutput& output, const Image& d_rgb,
                     std::span<double> gradient, double scale = 1.0);

/// Depth map in [-1, 1] at guidance resolution: disparity (1/depth) on the
/// foreground, background set to the foreground minimum, min-max normalized
/// so that the nearest surface is +1, then area-averaged to
/// target_size x target_size. All zeros when the foreground is empty or has
/// constant depth.
struct DepthCondition {
  int size = 0;
  std::vector<float> values;

  bool operator==(const DepthCondition&) const = default;
};

DepthCondition prepare_depth_condition(const RenderOutput& output, int target_size);

/// Box-filter resample of a square single-channel map with exact fractional
/// area weights.
std::vector<float> area_resample(std::span<const float> source, int source_size, int target_size);

/// 8-bit friendly previews; depth is tone-mapped for inspection only.
Image depth_preview(const RenderOutput& output);
Image mask_preview(const RenderOutput& output);

}  // namespace texsds
