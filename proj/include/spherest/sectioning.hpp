#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "spherest/simulate.hpp"

namespace spherest::sectioning {

// Plane {x : x.v = d} with an orthonormal in-plane frame (e1, e2); e1 is
// parallel to the reference axis u, which is perpendicular to v.
struct SectionPlane {
  Eigen::Vector3d v;
  double d = 0.0;
  Eigen::Vector3d e1;
  Eigen::Vector3d e2;

  void validate() const;
  Eigen::Vector2d plane_coordinates(const Eigen::Vector3d& x) const {
    return {x.dot(e1), x.dot(e2)};
  }
};

// The vertical section plane used throughout: normal along x, reference axis
// along z, through the origin; plane coordinates are (z, y).
SectionPlane vertical_plane();

struct SectionEllipse {
  Eigen::Vector2d center2;
  double A;      // semi-major
  double C;      // semi-minor, C <= A
  double S;      // C / A
  double alpha;  // angle to the reference axis, folded to [0, pi/2]
};

// Axis-aligned rectangle in plane coordinates.
struct Rect2 {
  double x_lo, x_hi, y_lo, y_hi;

  bool contains(const Eigen::Vector2d& p) const {
    return p(0) >= x_lo && p(0) <= x_hi && p(1) >= y_lo && p(1) <= y_hi;
  }
};

enum class EdgeRule { kCentersIn, kMinusSampling };

// Support half-width of the spheroid along a unit direction.
double half_width(const simulate::Spheroid& spheroid,
                  const Eigen::Vector3d& direction);

// Exact intersection ellipse, or nothing when the plane misses (tangency
// counts as a miss).
std::optional<SectionEllipse> intersect(const simulate::Spheroid& spheroid,
                                        const SectionPlane& plane);

std::vector<SectionEllipse> section_process(
    const std::vector<simulate::Spheroid>& spheroids, const SectionPlane& plane,
    const Rect2& obs_window, EdgeRule edge_rule, double margin = 0.0);

}  // namespace spherest::sectioning
