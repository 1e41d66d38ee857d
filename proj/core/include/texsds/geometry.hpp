#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <span>
#include <vector>

namespace texsds {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Triangle mesh with per-corner UVs. Geometry is fixed once loaded: the
/// optimizer only ever touches the texture field.
///
/// `corner_uvs` is either empty or holds exactly three entries per face, in
/// face order (corner k of face f lives at index 3 * f + k).
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec2> corner_uvs;
  std::vector<Vec3> normals;

  [[nodiscard]] std::size_t face_count() const { return faces.size(); }
  [[nodiscard]] bool has_uvs() const { return corner_uvs.size() == 3 * faces.size() && !faces.empty(); }

  [[nodiscard]] const Vec3& corner_position(std::size_t face, int corner) const {
    return vertices[faces[face][corner]];
  }
  [[nodiscard]] const Vec2& corner_uv(std::size_t face, int corner) const {
    return corner_uvs[3 * face + corner];
  }

  /// Throws MeshError if indices are out of range or UV/normal arrays have the
  /// wrong size.
  void validate() const;
};

/// Parses an ASCII Wavefront OBJ. Polygons are fan-triangulated from their
/// first vertex, `vt` coordinates become corner UVs when every face carries
/// them, and vertex normals are always recomputed.
TriangleMesh load_mesh(const std::filesystem::path& path);
TriangleMesh parse_obj(std::string_view text);

/// Writes `v`/`vt`/`vn`/`f` records. When `material_library` is non-empty a
/// `mtllib` line and `usemtl material` are emitted.
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path,
               const std::string& material_library = {});

/// Centers the bounding box on the origin and scales so that the farthest
/// vertex lies on the unit sphere.
TriangleMesh normalize_mesh(TriangleMesh mesh);

/// Area-weighted vertex normals.
std::vector<Vec3> compute_vertex_normals(std::span<const Vec3> vertices, std::span<const Face> faces);

/// Returns the mesh unchanged if every corner UV is finite and inside
/// [0,1]^2. Otherwise packs each triangle into its own cell of a
/// ceil(sqrt(F))^2 grid, leaving `gutter_texels` of padding at
/// `bake_resolution`.
TriangleMesh ensure_uv_atlas(TriangleMesh mesh, int bake_resolution = 512, int gutter_texels = 2);

/// Unconditionally replaces the UVs with the per-triangle grid atlas.
TriangleMesh generate_grid_atlas(TriangleMesh mesh, int bake_resolution = 512, int gutter_texels = 2);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double surface_area(const TriangleMesh& mesh);

/// Total area of all triangles in UV space.
double uv_area(const TriangleMesh& mesh);

}  // namespace texsds
