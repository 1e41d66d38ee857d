#include "texsds/baker.hpp"

#include "texsds/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace texsds {
namespace {

// Sub-texel precision of the UV rasterizer.
constexpr std::int64_t kSubTexel = 256;

struct FixedPoint {
  std::int64_t x;
  std::int64_t y;
};

FixedPoint to_fixed(const Vec2& uv, int resolution) {
  const double px = uv.x() * resolution;
  const double py = (1.0 - uv.y()) * resolution;
  return {std::llround(px * kSubTexel), std::llround(py * kSubTexel)};
}

std::int64_t edge(const FixedPoint& a, const FixedPoint& b, const FixedPoint& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

bool top_left(const FixedPoint& a, const FixedPoint& b) {
  const std::int64_t dx = b.x - a.x;
  const std::int64_t dy = b.y - a.y;
  return dy > 0 || (dy == 0 && dx < 0);
}

}  // namespace

std::size_t UvCoverage::covered_count() const {
  return static_cast<std::size_t>(std::count_if(owner.begin(), owner.end(), [](std::int32_t o) { return o >= 0; }));
}

UvCoverage rasterize_uv(const TriangleMesh& mesh, int resolution) {
  if (resolution < 1) throw InvalidArgument("UV raster resolution must be positive");
  if (!mesh.has_uvs()) throw AtlasError("mesh has no UV atlas");
  UvCoverage cov;
  cov.resolution = resolution;
  const std::size_t count = static_cast<std::size_t>(resolution) * resolution;
  cov.owner.assign(count, -1);
  cov.barycentric.assign(count, Vec3::Zero());

  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    std::array<FixedPoint, 3> p{to_fixed(mesh.corner_uv(f, 0), resolution),
                                to_fixed(mesh.corner_uv(f, 1), resolution),
                                to_fixed(mesh.corner_uv(f, 2), resolution)};
    std::array<int, 3> corner{0, 1, 2};
    std::int64_t area = edge(p[0], p[1], p[2]);
    if (area == 0) continue;
    if (area < 0) {
      std::swap(p[1], p[2]);
      std::swap(corner[1], corner[2]);
      area = -area;
    }
    const std::int64_t min_x = std::min({p[0].x, p[1].x, p[2].x});
    const std::int64_t max_x = std::max({p[0].x, p[1].x, p[2].x});
    const std::int64_t min_y = std::min({p[0].y, p[1].y, p[2].y});
    const std::int64_t max_y = std::max({p[0].y, p[1].y, p[2].y});
    const std::int64_t half = kSubTexel / 2;
    // Texel x has its center at x * kSubTexel + half.
    auto first = [&](std::int64_t lo) {
      return static_cast<int>(std::max<std::int64_t>(0, (lo - half + kSubTexel - 1) / kSubTexel));
    };
    auto last = [&](std::int64_t hi) {
      const std::int64_t v = hi - half;
      return static_cast<int>(std::min<std::int64_t>(resolution - 1, v < 0 ? -1 : v / kSubTexel));
    };
    const int x0 = first(min_x), x1 = last(max_x), y0 = first(min_y), y1 = last(max_y);
    const std::array<bool, 3> tl{top_left(p[1], p[2]), top_left(p[2], p[0]), top_left(p[0], p[1])};

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const FixedPoint c{x * kSubTexel + half, y * kSubTexel + half};
        const std::array<std::int64_t, 3> w{edge(p[1], p[2], c), edge(p[2], p[0], c), edge(p[0], p[1], c)};
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) inside = w[k] > 0 || (w[k] == 0 && tl[k]);
        if (!inside) continue;

        const std::size_t idx = static_cast<std::size_t>(y) * resolution + x;
        if (cov.owner[idx] >= 0) {
          throw AtlasError("UV charts overlap: triangles " + std::to_string(cov.owner[idx]) + " and " +
                           std::to_string(f) + " both cover texel (" + std::to_string(x) + ", " +
                           std::to_string(y) + ")");
        }
        cov.owner[idx] = static_cast<std::int32_t>(f);
        Vec3 bary = Vec3::Zero();
        for (int k = 0; k < 3; ++k) bary[corner[k]] = static_cast<double>(w[k]) / static_cast<double>(area);
        cov.barycentric[idx] = bary;
      }
    }
  }
  return cov;
}

std::size_t dilate(Image& image, const std::vector<std::uint8_t>& occupancy, int radius) {
  if (occupancy.size() != image.pixel_count()) throw InvalidArgument("dilate: occupancy size mismatch");
  if (radius <= 0) return 0;
  struct Offset {
    int dx, dy, d2;
  };
  std::vector<Offset> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int d2 = dx * dx + dy * dy;
      if (d2 > 0 && d2 <= radius * radius) offsets.push_back({dx, dy, d2});
    }
  }
  std::stable_sort(offsets.begin(), offsets.end(), [](const Offset& a, const Offset& b) { return a.d2 < b.d2; });

  const Image source = image;
  std::size_t filled = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (occupancy[static_cast<std::size_t>(y) * image.width + x]) continue;
      for (const Offset& o : offsets) {
        const int sx = x + o.dx;
        const int sy = y + o.dy;
        if (sx < 0 || sy < 0 || sx >= image.width || sy >= image.height) continue;
        if (!occupancy[static_cast<std::size_t>(sy) * image.width + sx]) continue;
        for (int c = 0; c < image.channels; ++c) image.at(x, y, c) = source.at(sx, sy, c);
        ++filled;
        break;
      }
    }
  }
  return filled;
}

BakedTexture bake(const TriangleMesh& mesh, const TextureField& field, int resolution, int dilation) {
  if (resolution < 64) throw InvalidArgument("bake resolution must be >= 64");
  if (dilation < 0) throw InvalidArgument("dilation must be >= 0");
  const UvCoverage cov = rasterize_uv(mesh, resolution);

  BakedTexture baked;
  baked.atlas = mesh.corner_uvs;
  baked.image = Image(resolution, resolution, 3, 0.5f);
  baked.occupancy.assign(cov.owner.size(), 0);
  FieldEvaluator eval(field);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * resolution + x;
      const std::int32_t tri = cov.owner[idx];
      if (tri < 0) continue;
      const Vec3& b = cov.barycentric[idx];
      const auto f = static_cast<std::size_t>(tri);
      const Vec3 p = b[0] * mesh.corner_position(f, 0) + b[1] * mesh.corner_position(f, 1) +
                     b[2] * mesh.corner_position(f, 2);
      baked.image.set_rgb(x, y, eval.query(p).cwiseMax(0.0).cwiseMin(1.0));
      baked.occupancy[idx] = 1;
    }
  }
  dilate(baked.image, baked.occupancy, dilation);
  return baked;
}

ExportedFiles export_textured_mesh(const TriangleMesh& mesh, const BakedTexture& baked,
                                   const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
  ExportedFiles files{out_dir / "model.obj", out_dir / "model.mtl", out_dir / "texture.png"};

  TriangleMesh out = mesh;
  out.corner_uvs = baked.atlas;
  write_obj(out, files.obj, "model.mtl");
  {
    std::ofstream mtl(files.mtl);
    if (!mtl) throw Error("cannot write " + files.mtl.string());
    mtl << "newmtl material\nKa 0 0 0\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd texture.png\n";
    if (!mtl) throw Error("failed writing " + files.mtl.string());
  }
  write_png(files.texture, baked.image);
  return files;
}

}  // namespace texsds
