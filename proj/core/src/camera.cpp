#include "texsds/camera.hpp"

#include "texsds/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace texsds {
namespace {

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw InvalidArgument(std::string("inverted ") + name + " range");
}

}  // namespace

Vec3 CameraFrame::to_camera(const Vec3& world) const {
  const Vec3 d = world - position;
  return {d.dot(right), d.dot(up), d.dot(forward)};
}

Vec3 CameraFrame::pixel_direction(int x, int y, int resolution) const {
  const double sx = (2.0 * (x + 0.5) / resolution - 1.0) * tan_half_fov;
  const double sy = (1.0 - 2.0 * (y + 0.5) / resolution) * tan_half_fov;
  return forward + sx * right + sy * up;
}

CameraFrame make_frame(const CameraSample& camera) {
  const double el = radians(camera.elevation);
  const double az = radians(camera.azimuth);
  const Vec3 offset(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));

  CameraFrame frame;
  frame.position = camera.look_at + camera.distance * offset;
  frame.forward = -offset;
  Vec3 world_up = Vec3::UnitY();
  if (std::abs(frame.forward.dot(world_up)) > 1.0 - 1e-9) world_up = -Vec3::UnitZ();
  frame.right = frame.forward.cross(world_up).normalized();
  frame.up = frame.right.cross(frame.forward);
  frame.tan_half_fov = std::tan(0.5 * radians(camera.fov_y));
  return frame;
}

std::vector<CameraSample> sample_cameras(std::mt19937_64& rng, int batch, Range elevation, Range distance,
                                         Range azimuth, double fov_y) {
  if (batch < 1) throw InvalidArgument("camera batch must be >= 1");
  check_range(elevation, "elevation");
  check_range(distance, "distance");
  check_range(azimuth, "azimuth");

  auto uniform = [&rng](const Range& r) {
    if (r.lo == r.hi) {
      rng.discard(1);
      return r.lo;
    }
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };

  std::vector<CameraSample> out(static_cast<std::size_t>(batch));
  for (auto& cam : out) {
    cam.elevation = uniform(elevation);
    cam.distance = uniform(distance);
    double az = std::fmod(uniform(azimuth), 360.0);
    if (az < 0.0) az += 360.0;
    cam.azimuth = az;
    cam.fov_y = fov_y;
  }
  return out;
}

std::vector<CameraSample> turntable(int count, double elevation, double distance, double fov_y) {
  if (count < 1) throw InvalidArgument("turntable needs at least one view");
  std::vector<CameraSample> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out[i].elevation = elevation;
    out[i].azimuth = 360.0 * i / count;
    out[i].distance = distance;
    out[i].fov_y = fov_y;
  }
  return out;
}

}  // namespace texsds
