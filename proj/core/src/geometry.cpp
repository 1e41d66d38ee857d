#include "texsds/geometry.hpp"

#include "texsds/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

namespace texsds {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view token, std::size_t line) {
  // std::from_chars for floating point is incomplete on some toolchains.
  std::string buf(token);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end == buf.c_str() || *end != '\0') {
    throw MeshError("line " + std::to_string(line) + ": invalid number '" + buf + "'");
  }
  return v;
}

long parse_index(std::string_view token, std::size_t line) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value == 0) {
    throw MeshError("line " + std::to_string(line) + ": malformed index '" + std::string(token) + "'");
  }
  return value;
}

// OBJ indices are 1-based; negative values count back from the end.
std::size_t resolve_index(long index, std::size_t count, std::size_t line) {
  const long resolved = index > 0 ? index - 1 : static_cast<long>(count) + index;
  if (resolved < 0 || static_cast<std::size_t>(resolved) >= count) {
    throw MeshError("line " + std::to_string(line) + ": index " + std::to_string(index) +
                    " out of range (" + std::to_string(count) + " entries)");
  }
  return static_cast<std::size_t>(resolved);
}

struct CornerRef {
  std::size_t vertex;
  std::optional<std::size_t> uv;
};

}  // namespace

void TriangleMesh::validate() const {
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (auto idx : faces[f]) {
      if (idx >= vertices.size()) {
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                        " but mesh has " + std::to_string(vertices.size()) + " vertices");
      }
    }
  }
  if (!corner_uvs.empty() && corner_uvs.size() != 3 * faces.size()) {
    throw MeshError("corner UV count does not match 3 * face count");
  }
  if (!normals.empty() && normals.size() != vertices.size()) {
    throw MeshError("normal count does not match vertex count");
  }
}

TriangleMesh parse_obj(std::string_view text) {
  std::vector<Vec3> positions;
  std::vector<Vec2> texcoords;
  std::vector<Face> faces;
  std::vector<std::array<std::optional<std::size_t>, 3>> face_uvs;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const auto raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    auto line = trim(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    const auto tokens = split_ws(line);
    const auto& tag = tokens[0];
    if (tag == "v") {
      if (tokens.size() < 4) throw MeshError("line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
      positions.emplace_back(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no),
                             parse_double(tokens[3], line_no));
    } else if (tag == "vt") {
      if (tokens.size() < 3) throw MeshError("line " + std::to_string(line_no) + ": vt needs 2 coordinates");
      texcoords.emplace_back(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no));
    } else if (tag == "f") {
      if (tokens.size() < 4) throw MeshError("line " + std::to_string(line_no) + ": face needs at least 3 corners");
      std::vector<CornerRef> corners;
      corners.reserve(tokens.size() - 1);
      for (std::size_t k = 1; k < tokens.size(); ++k) {
        const auto token = tokens[k];
        const auto slash = token.find('/');
        CornerRef ref{};
        ref.vertex = resolve_index(parse_index(token.substr(0, slash), line_no), positions.size(), line_no);
        if (slash != std::string_view::npos) {
          const auto rest = token.substr(slash + 1);
          const auto slash2 = rest.find('/');
          const auto vt = rest.substr(0, slash2);
          if (!vt.empty()) ref.uv = resolve_index(parse_index(vt, line_no), texcoords.size(), line_no);
          if (slash2 != std::string_view::npos) {
            const auto vn = rest.substr(slash2 + 1);
            if (!vn.empty()) parse_index(vn, line_no);
          }
        }
        corners.push_back(ref);
      }
      for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
        const std::array<const CornerRef*, 3> tri{&corners[0], &corners[k], &corners[k + 1]};
        faces.push_back({static_cast<std::uint32_t>(tri[0]->vertex), static_cast<std::uint32_t>(tri[1]->vertex),
                         static_cast<std::uint32_t>(tri[2]->vertex)});
        face_uvs.push_back({tri[0]->uv, tri[1]->uv, tri[2]->uv});
      }
    }
    // Other records (vn, o, g, s, mtllib, usemtl, ...) carry nothing we use.
  }

  if (faces.empty()) throw MeshError("mesh has no faces");

  TriangleMesh mesh;
  mesh.vertices = std::move(positions);
  mesh.faces = std::move(faces);

  const bool all_uvs = std::all_of(face_uvs.begin(), face_uvs.end(), [](const auto& f) {
    return f[0].has_value() && f[1].has_value() && f[2].has_value();
  });
  if (all_uvs) {
    mesh.corner_uvs.reserve(3 * mesh.faces.size());
    for (const auto& f : face_uvs) {
      for (const auto& uv : f) mesh.corner_uvs.push_back(texcoords[*uv]);
    }
  }
  mesh.normals = compute_vertex_normals(mesh.vertices, mesh.faces);
  return mesh;
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!std::filesystem::exists(path) || !in) throw MeshError("file not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_obj(buffer.str());
  } catch (const MeshError& e) {
    throw MeshError(path.string() + ": " + e.what());
  }
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path, const std::string& material_library) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.precision(9);
  out << "# texsds export\n";
  if (!material_library.empty()) out << "mtllib " << material_library << "\n";
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& uv : mesh.corner_uvs) out << "vt " << uv.x() << ' ' << uv.y() << '\n';
  for (const auto& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  if (!material_library.empty()) out << "usemtl material\n";
  const bool uvs = mesh.has_uvs();
  const bool normals = mesh.normals.size() == mesh.vertices.size();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out << 'f';
    for (int k = 0; k < 3; ++k) {
      const auto v = mesh.faces[f][k] + 1;
      out << ' ' << v;
      if (uvs || normals) out << '/';
      if (uvs) out << 3 * f + k + 1;
      if (normals) out << '/' << v;
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<Vec3> compute_vertex_normals(std::span<const Vec3> vertices, std::span<const Face> faces) {
  std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
  for (const auto& f : faces) {
    // The unnormalized cross product has length 2 * area, which gives the
    // area weighting for free.
    const Vec3 n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
    for (auto idx : f) normals[idx] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
  }
  return normals;
}

TriangleMesh normalize_mesh(TriangleMesh mesh) {
  if (mesh.faces.empty()) throw MeshError("cannot normalize a mesh with no faces");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  if ((hi - lo).maxCoeff() <= 0.0) throw MeshError("degenerate extent: all vertices coincide");

  const Vec3 center = 0.5 * (lo + hi);
  double max_norm = 0.0;
  for (auto& v : mesh.vertices) {
    v -= center;
    max_norm = std::max(max_norm, v.norm());
  }
  for (auto& v : mesh.vertices) v /= max_norm;
  if (mesh.normals.size() != mesh.vertices.size()) mesh.normals = compute_vertex_normals(mesh.vertices, mesh.faces);
  return mesh;
}

TriangleMesh ensure_uv_atlas(TriangleMesh mesh, int bake_resolution, int gutter_texels) {
  if (mesh.has_uvs()) {
    const bool valid = std::all_of(mesh.corner_uvs.begin(), mesh.corner_uvs.end(), [](const Vec2& uv) {
      return std::isfinite(uv.x()) && std::isfinite(uv.y()) && uv.x() >= 0.0 && uv.x() <= 1.0 && uv.y() >= 0.0 &&
             uv.y() <= 1.0;
    });
    if (valid) return mesh;
  }
  return generate_grid_atlas(std::move(mesh), bake_resolution, gutter_texels);
}

TriangleMesh generate_grid_atlas(TriangleMesh mesh, int bake_resolution, int gutter_texels) {
  if (bake_resolution <= 0) throw InvalidArgument("bake resolution must be positive");
  const std::size_t face_count = mesh.faces.size();
  const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(face_count))));
  const double cell = 1.0 / static_cast<double>(grid);
  const double gutter = static_cast<double>(gutter_texels) / bake_resolution;
  const double inner = std::max(cell - 2.0 * gutter, 0.0);

  mesh.corner_uvs.assign(3 * face_count, Vec2::Zero());
  for (std::size_t f = 0; f < face_count; ++f) {
    const Vec3& a = mesh.corner_position(f, 0);
    const Vec3& b = mesh.corner_position(f, 1);
    const Vec3& c = mesh.corner_position(f, 2);

    // Planar coordinates of the triangle in its own tangent frame.
    std::array<Vec2, 3> local{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    Vec3 e1 = ab.norm() > 0.0 ? Vec3(ab.normalized()) : (ac.norm() > 0.0 ? Vec3(ac.normalized()) : Vec3::UnitX());
    const Vec3 n = ab.cross(ac);
    Vec3 e2 = n.norm() > 0.0 ? Vec3(n.normalized().cross(e1)) : Vec3::Zero();
    local[1] = Vec2(ab.dot(e1), ab.dot(e2));
    local[2] = Vec2(ac.dot(e1), ac.dot(e2));

    Vec2 lo = local[0].cwiseMin(local[1]).cwiseMin(local[2]);
    Vec2 hi = local[0].cwiseMax(local[1]).cwiseMax(local[2]);
    const Vec2 extent = hi - lo;
    const double longest = std::max(extent.x(), extent.y());
    const double scale = longest > 0.0 ? inner / longest : 0.0;

    const double cx = static_cast<double>(f % grid) * cell + gutter;
    const double cy = static_cast<double>(f / grid) * cell + gutter;
    // Center the shorter axis inside the cell.
    const Vec2 offset(cx + 0.5 * (inner - extent.x() * scale), cy + 0.5 * (inner - extent.y() * scale));
    for (int k = 0; k < 3; ++k) mesh.corner_uvs[3 * f + k] = offset + (local[k] - lo) * scale;
  }
  return mesh;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

double surface_area(const TriangleMesh& mesh) {
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += triangle_area(mesh.corner_position(f, 0), mesh.corner_position(f, 1), mesh.corner_position(f, 2));
  }
  return total;
}

double uv_area(const TriangleMesh& mesh) {
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size() && mesh.has_uvs(); ++f) {
    const Vec2 e1 = mesh.corner_uv(f, 1) - mesh.corner_uv(f, 0);
    const Vec2 e2 = mesh.corner_uv(f, 2) - mesh.corner_uv(f, 0);
    total += 0.5 * std::abs(e1.x() * e2.y() - e1.y() * e2.x());
  }
  return total;
}

}  // namespace texsds
