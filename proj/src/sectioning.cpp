#include "spherest/sectioning.hpp"

#include <cmath>
#include <stdexcept>

namespace spherest::sectioning {

namespace {

constexpr double kTangencyTol = 1e-12;

}  // namespace

void SectionPlane::validate() const {
  const double tol = 1e-12;
  if (std::abs(v.norm() - 1.0) > tol || std::abs(e1.norm() - 1.0) > tol ||
      std::abs(e2.norm() - 1.0) > tol)
    throw std::invalid_argument("SectionPlane: frame vectors must be unit");
  if (std::abs(v.dot(e1)) > tol || std::abs(v.dot(e2)) > tol ||
      std::abs(e1.dot(e2)) > tol)
    throw std::invalid_argument("SectionPlane: frame must be orthonormal");
}

SectionPlane vertical_plane() {
  SectionPlane plane;
  plane.v = Eigen::Vector3d::UnitX();
  plane.d = 0.0;
  plane.e1 = Eigen::Vector3d::UnitZ();
  plane.e2 = Eigen::Vector3d::UnitY();
  return plane;
}

double half_width(const simulate::Spheroid& spheroid,
                  const Eigen::Vector3d& direction) {
  const double dot = spheroid.axis.dot(direction);
  return std::sqrt(spheroid.c * spheroid.c +
                   (spheroid.a * spheroid.a - spheroid.c * spheroid.c) * dot * dot);
}

std::optional<SectionEllipse> intersect(const simulate::Spheroid& spheroid,
                                        const SectionPlane& plane) {
  const double dist = std::abs(spheroid.center.dot(plane.v) - plane.d);
  if (half_width(spheroid, plane.v) - dist <= kTangencyTol) return std::nullopt;

  const Eigen::Matrix3d outer = spheroid.axis * spheroid.axis.transpose();
  const Eigen::Matrix3d q =
      outer / (spheroid.a * spheroid.a) +
      (Eigen::Matrix3d::Identity() - outer) / (spheroid.c * spheroid.c);

  // Restrict (x - center)^T Q (x - center) = 1 to x = w + E t:
  // t^T M t + 2 b^T t + k = 0 with M = E^T Q E, b = E^T Q delta,
  // k = delta^T Q delta - 1, delta = w - center.
  Eigen::Matrix<double, 3, 2> frame;
  frame.col(0) = plane.e1;
  frame.col(1) = plane.e2;
  const Eigen::Vector3d w = plane.d * plane.v;
  const Eigen::Vector3d delta = w - spheroid.center;
  const Eigen::Matrix2d m = frame.transpose() * q * frame;
  const Eigen::Vector2d b = frame.transpose() * (q * delta);
  const double k = delta.dot(q * delta) - 1.0;

  const Eigen::Vector2d t0 = -m.ldlt().solve(b);
  const double gamma = t0.dot(m * t0) - k;
  if (!(gamma > 0.0)) return std::nullopt;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(m);
  const Eigen::Vector2d lambda = eig.eigenvalues();  // ascending
  const Eigen::Vector2d major_dir = eig.eigenvectors().col(0);

  SectionEllipse out;
  out.A = std::sqrt(gamma / lambda(0));
  out.C = std::sqrt(gamma / lambda(1));
  out.S = out.C / out.A;
  // e1 is parallel to u, so the in-plane direction of u is (1, 0).
  out.alpha = std::atan2(std::abs(major_dir(1)), std::abs(major_dir(0)));
  const Eigen::Vector3d center3 = w + frame * t0;
  out.center2 = plane.plane_coordinates(center3);
  return out;
}

std::vector<SectionEllipse> section_process(
    const std::vector<simulate::Spheroid>& spheroids, const SectionPlane& plane,
    const Rect2& obs_window, EdgeRule edge_rule, double margin) {
  std::vector<SectionEllipse> out;
  for (const auto& sp : spheroids) {
    const auto ellipse = intersect(sp, plane);
    if (!ellipse) continue;
    if (edge_rule == EdgeRule::kCentersIn) {
      if (obs_window.contains(ellipse->center2)) out.push_back(*ellipse);
      continue;
    }
    // Minus-sampling: the ellipse's bounding box must lie in the window
    // eroded by the margin. Half-extents follow from (A, C, alpha); the
    // folded angle suffices because only squared trig terms enter.
    const double ca = std::cos(ellipse->alpha);
    const double sa = std::sin(ellipse->alpha);
    const double ext1 = std::sqrt(ellipse->A * ellipse->A * ca * ca +
                                  ellipse->C * ellipse->C * sa * sa);
    const double ext2 = std::sqrt(ellipse->A * ellipse->A * sa * sa +
                                  ellipse->C * ellipse->C * ca * ca);
    const Eigen::Vector2d c2 = ellipse->center2;
    if (c2(0) - ext1 >= obs_window.x_lo + margin &&
        c2(0) + ext1 <= obs_window.x_hi - margin &&
        c2(1) - ext2 >= obs_window.y_lo + margin &&
        c2(1) + ext2 <= obs_window.y_hi - margin)
      out.push_back(*ellipse);
  }
  return out;
}

}  // namespace spherest::sectioning
