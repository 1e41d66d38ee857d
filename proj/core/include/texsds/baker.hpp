#pragma once

#include "texsds/geometry.hpp"
#include "texsds/image.hpp"
#include "texsds/texfield.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace texsds {

inline constexpr int kDefaultBakeResolution = 512;
inline constexpr int kDefaultDilation = 4;

/// Which triangle covers each texel of a UV atlas, and where.
///
/// Texel (x, y) has its center at u = (x + 0.5) / R, v = 1 - (y + 0.5) / R.
/// Coverage is decided in fixed point with a top-left fill rule, so texel
/// centers on an edge shared by two charts belong to exactly one of them.
struct UvCoverage {
  int resolution = 0;
  std::vector<std::int32_t> owner;  // -1 where uncovered
  std::vector<Vec3> barycentric;

  [[nodiscard]] std::size_t covered_count() const;
};

/// Throws AtlasError naming the first two triangles found on the same texel.
UvCoverage rasterize_uv(const TriangleMesh& mesh, int resolution);

struct BakedTexture {
  Image image;                          // R x R x 3 in [0, 1]
  std::vector<std::uint8_t> occupancy;  // 1 where a chart covers the texel
  std::vector<Vec2> atlas;              // corner UVs the image was baked against

  [[nodiscard]] int resolution() const { return image.width; }
};

/// Queries the field at the surface point behind every covered texel, then
/// dilates chart colors `dilation` texels outward. Texels that remain
/// uncovered are mid gray.
BakedTexture bake(const TriangleMesh& mesh, const TextureField& field, int resolution = kDefaultBakeResolution,
                  int dilation = kDefaultDilation);

/// Nearest-occupied fill within Euclidean radius `radius`. Occupied texels are
/// never modified. Returns the number of texels filled.
std::size_t dilate(Image& image, const std::vector<std::uint8_t>& occupancy, int radius);

struct ExportedFiles {
  std::filesystem::path obj;
  std::filesystem::path mtl;
  std::filesystem::path texture;
};

/// Writes model.obj (with per-corner vt), model.mtl (map_Kd texture.png) and
/// texture.png (8-bit RGB) into out_dir.
ExportedFiles export_textured_mesh(const TriangleMesh& mesh, const BakedTexture& baked,
                                   const std::filesystem::path& out_dir);

}  // namespace texsds
