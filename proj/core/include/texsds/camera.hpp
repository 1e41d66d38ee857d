#pragma once

#include "texsds/geometry.hpp"

#include <random>
#include <vector>

namespace texsds {

/// Closed interval [lo, hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
  [[nodiscard]] double mid() const { return 0.5 * (lo + hi); }
  bool operator==(const Range&) const = default;
};

/// Orbit camera looking at `look_at`. Angles are in degrees; elevation is
/// measured up from the horizontal plane (y is up), azimuth around +y
/// starting from +z.
struct CameraSample {
  double elevation = 30.0;
  double azimuth = 0.0;
  double distance = 1.25;
  double fov_y = 40.0;
  Vec3 look_at = Vec3::Zero();

  bool operator==(const CameraSample&) const = default;
};

/// World-space pinhole frame derived from a CameraSample.
struct CameraFrame {
  Vec3 position;
  Vec3 right;
  Vec3 up;
  Vec3 forward;
  double tan_half_fov = 0.0;

  [[nodiscard]] Vec3 to_camera(const Vec3& world) const;

  /// Unnormalized world-space direction through the center of pixel (x, y)
  /// of a square image with `resolution` pixels per side. Its component
  /// along `forward` is 1.
  [[nodiscard]] Vec3 pixel_direction(int x, int y, int resolution) const;
};

CameraFrame make_frame(const CameraSample& camera);

/// Independent uniform draws of elevation, distance and azimuth per sample.
/// Azimuth is wrapped into [0, 360).
std::vector<CameraSample> sample_cameras(std::mt19937_64& rng, int batch, Range elevation, Range distance,
                                         Range azimuth = {0.0, 360.0}, double fov_y = 40.0);

/// `count` evenly spaced azimuths starting at 0.
std::vector<CameraSample> turntable(int count, double elevation, double distance, double fov_y = 40.0);

}  // namespace texsds
