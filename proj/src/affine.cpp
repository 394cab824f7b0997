#include "tplreg/affine.hpp"

#include <cmath>

#include "tplreg/error.hpp"

namespace tplreg {

AffineTransform AffineTransform::rotation(double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  return {c, -s, s, c, 0.0, 0.0};
}

AffineTransform AffineTransform::shear(double s) { return {1.0, s, 0.0, 1.0, 0.0, 0.0}; }

AffineTransform AffineTransform::from_params(const std::array<double, 6>& p) {
  return {p[0], p[1], p[2], p[3], p[4], p[5]};
}

AffineTransform AffineTransform::inverse() const {
  const double det = determinant();
  if (!(std::abs(det) >= 1e-12)) {
    throw Error(ErrorCode::SingularTransform, "affine determinant is " + std::to_string(det));
  }
  const double i11 = a22 / det;
  const double i12 = -a12 / det;
  const double i21 = -a21 / det;
  const double i22 = a11 / det;
  return {i11, i12, i21, i22, -(i11 * tx + i12 * ty), -(i21 * tx + i22 * ty)};
}

AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner) {
  return {outer.a11 * inner.a11 + outer.a12 * inner.a21,
          outer.a11 * inner.a12 + outer.a12 * inner.a22,
          outer.a21 * inner.a11 + outer.a22 * inner.a21,
          outer.a21 * inner.a12 + outer.a22 * inner.a22,
          outer.a11 * inner.tx + outer.a12 * inner.ty + outer.tx,
          outer.a21 * inner.tx + outer.a22 * inner.ty + outer.ty};
}

AffineTransform about_point(const AffineTransform& linear, Point2 center) {
  return compose(AffineTransform::translation(center.x, center.y),
                 compose(linear, AffineTransform::translation(-center.x, -center.y)));
}

}  // namespace tplreg
