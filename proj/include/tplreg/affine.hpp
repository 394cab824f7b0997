#pragma once

#include <array>

namespace tplreg {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// 2D affine map x' = A x + t, i.e. the homogeneous matrix
///   [a11 a12 tx]
///   [a21 a22 ty]
///   [ 0   0   1]
struct AffineTransform {
  double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;
  double tx = 0.0, ty = 0.0;

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double x, double y) { return {1.0, 0.0, 0.0, 1.0, x, y}; }
  /// Counter-clockwise rotation in image coordinates (y pointing down).
  static AffineTransform rotation(double radians);
  /// Unit-diagonal upper shear [[1, s], [0, 1]].
  static AffineTransform shear(double s);
  /// Parameter order: a11, a12, a21, a22, tx, ty.
  static AffineTransform from_params(const std::array<double, 6>& p);

  std::array<double, 6> params() const { return {a11, a12, a21, a22, tx, ty}; }

  double determinant() const { return a11 * a22 - a12 * a21; }

  Point2 apply(Point2 p) const { return {a11 * p.x + a12 * p.y + tx, a21 * p.x + a22 * p.y + ty}; }

  /// Throws SingularTransform when |det| < 1e-12.
  AffineTransform inverse() const;

  bool operator==(const AffineTransform&) const = default;
};

/// (outer ∘ inner)(p) = outer(inner(p)).
AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner);

/// Same map, conjugated so that it acts about `center` instead of the origin.
AffineTransform about_point(const AffineTransform& linear, Point2 center);

}  // namespace tplreg
