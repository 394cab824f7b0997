#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "tplreg/affine.hpp"
#include "tplreg/image.hpp"

namespace tplreg {

/// Bins at each end of the Parzen axis that stay empty so the cubic kernel
/// support never leaves the grid.
inline constexpr int kParzenPad = 2;

/// Normalized joint intensity distribution. Rows index intensities of the
/// first image (linear binning), columns the second (cubic B-spline Parzen).
struct JointHistogram {
  int bins = 0;
  Eigen::MatrixXd mass;
  Eigen::VectorXd marginal_a;
  Eigen::VectorXd marginal_b;
};

/// Both images are mapped into bin space by the min/max of their valid
/// pixels. An empty mask means every pixel is valid.
JointHistogram joint_histogram(const RasterImage& a, const RasterImage& b, const ValidityMask& mask,
                               int bins);

/// Sum of p log(p / (pa pb)) over cells with p > 0, natural log.
double mutual_information(const JointHistogram& h);

/// (H(a) + H(b)) / H(a, b); diagnostic only.
double normalized_mutual_information(const JointHistogram& h);

/// Cubic B-spline and its derivative.
double bspline3(double t);
double bspline3_derivative(double t);

struct MiValue {
  double mi = 0.0;
  /// d MI / d (a11, a12, a21, a22, tx, ty)
  std::array<double, 6> gradient{};
};

/// MI between the template and the target sampled at u(x) over the template
/// grid, with its analytic gradient. The target's bin range is taken over the
/// whole target image so it does not move with u.
MiValue mi_objective(const RasterImage& template_image, const RasterImage& target,
                     const AffineTransform& u, int bins = 32);

struct RegistrationSettings {
  int bins = 32;
  int max_iters = 100;
  /// Pixel-equivalent parameter step below which the search stops.
  double step_tolerance = 1e-4;
  double gradient_tolerance = 1e-6;
  double backtrack = 0.5;
  int max_backtracks = 10;
  /// Longest trial step, pixel-equivalent.
  double max_step = 8.0;
  double initial_step = 1.0;
};

struct RegistrationResult {
  AffineTransform transform;
  double final_mi = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> mi_trace;  ///< MI at the start, then after each accepted step
};

/// Quasi-Newton (BFGS) ascent of MI over the six affine parameters. Linear
/// entries are scaled by the template half-size so every coordinate moves
/// pixels at a comparable rate.
RegistrationResult register_affine(const RasterImage& template_image, const RasterImage& target,
                                   const AffineTransform& init,
                                   const RegistrationSettings& settings = {});

}  // namespace tplreg
