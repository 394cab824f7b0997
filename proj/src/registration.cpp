#include "tplreg/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "tplreg/error.hpp"

namespace tplreg {

namespace {

struct Range {
  double lo = 0.0;
  double scale = 0.0;  ///< bin units per intensity unit
};

Range bin_range(double lo, double hi, int bins, const char* which) {
  if (!(hi - lo > 1e-12)) {
    throw Error(ErrorCode::DegenerateIntensity, std::string(which) + " image has constant intensity");
  }
  return {lo, (bins - 1 - 2 * kParzenPad) / (hi - lo)};
}

void check_bins(int bins) {
  if (bins < 2 * kParzenPad + 2) throw Error(ErrorCode::InvalidArgument, "too few histogram bins");
}

// Accumulates one pixel pair. xa and xb are bin-space positions.
inline void deposit(Eigen::MatrixXd& mass, double xa, double xb) {
  const int ia = static_cast<int>(xa);
  const double fa = xa - ia;
  const int kb = static_cast<int>(xb);
  for (int k = kb - 1; k <= kb + 2; ++k) {
    const double w = bspline3(k - xb);
    if (w == 0.0) continue;
    mass(ia, k) += (1.0 - fa) * w;
    if (fa > 0.0) mass(ia + 1, k) += fa * w;
  }
}

void finish(JointHistogram& h, double count) {
  h.mass /= count;
  h.marginal_a = h.mass.rowwise().sum();
  h.marginal_b = h.mass.colwise().sum().transpose();
}

}  // namespace

double bspline3(double t) {
  t = std::abs(t);
  if (t < 1.0) return 2.0 / 3.0 - t * t + 0.5 * t * t * t;
  if (t < 2.0) {
    const double r = 2.0 - t;
    return r * r * r / 6.0;
  }
  return 0.0;
}

double bspline3_derivative(double t) {
  const double s = t < 0.0 ? -1.0 : 1.0;
  t = std::abs(t);
  if (t < 1.0) return s * (-2.0 * t + 1.5 * t * t);
  if (t < 2.0) {
    const double r = 2.0 - t;
    return -s * 0.5 * r * r;
  }
  return 0.0;
}

JointHistogram joint_histogram(const RasterImage& a, const RasterImage& b, const ValidityMask& mask,
                               int bins) {
  check_bins(bins);
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::DimensionMismatch, "histogram images differ in size");
  }
  if (!mask.empty() && mask.size() != a.size()) {
    throw Error(ErrorCode::DimensionMismatch, "mask size differs from image size");
  }
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  double alo = std::numeric_limits<double>::infinity(), ahi = -alo, blo = alo, bhi = -alo;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    alo = std::min(alo, pa[i]);
    ahi = std::max(ahi, pa[i]);
    blo = std::min(blo, pb[i]);
    bhi = std::max(bhi, pb[i]);
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::NoValidPixels, "mask selects no pixels");
  const Range ra = bin_range(alo, ahi, bins, "first");
  const Range rb = bin_range(blo, bhi, bins, "second");

  JointHistogram h;
  h.bins = bins;
  h.mass = Eigen::MatrixXd::Zero(bins, bins);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    deposit(h.mass, kParzenPad + (pa[i] - ra.lo) * ra.scale, kParzenPad + (pb[i] - rb.lo) * rb.scale);
  }
  finish(h, static_cast<double>(count));
  return h;
}

double mutual_information(const JointHistogram& h) {
  double mi = 0.0;
  for (int j = 0; j < h.mass.cols(); ++j) {
    for (int i = 0; i < h.mass.rows(); ++i) {
      const double p = h.mass(i, j);
      if (p > 0.0) mi += p * std::log(p / (h.marginal_a[i] * h.marginal_b[j]));
    }
  }
  return mi;
}

double normalized_mutual_information(const JointHistogram& h) {
  auto entropy = [](const auto& v) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double p = v(i);
      if (p > 0.0) e -= p * std::log(p);
    }
    return e;
  };
  const double joint = entropy(h.mass.reshaped());
  if (joint <= 0.0) return 2.0;
  return (entropy(h.marginal_a) + entropy(h.marginal_b)) / joint;
}

namespace {

MiValue objective_with_range(const RasterImage& template_image, const RasterImage& target,
                             const AffineTransform& u, int bins, const Range& rb) {
  if (!(std::abs(u.determinant()) >= 1e-12)) {
    throw Error(ErrorCode::SingularTransform, "objective at a singular transform");
  }
  const int tw = template_image.width();
  const int th = template_image.height();
  const int sw = target.width();
  const int sh = target.height();
  const std::size_t n = template_image.size();

  // Pass 1: bilinear sample (value and gradient) of the target at u(x).
  struct Sample {
    int kb;
    int ia;
    double t;   ///< fractional Parzen position
    double fa;  ///< fractional linear-bin position
    double dx, dy;
  };
  std::vector<Sample> samples(n);
  ValidityMask valid(n, 0);
  double alo = std::numeric_limits<double>::infinity(), ahi = -alo;
  std::size_t count = 0;
  constexpr double eps = 1e-9;
  const double max_x = sw - 1, max_y = sh - 1;
  const double* tgt = target.pixels().data();
  for (int y = 0; y < th; ++y) {
    double px = u.a12 * y + u.tx;
    double py = u.a22 * y + u.ty;
    const double* arow = template_image.row(y);
    for (int x = 0; x < tw; ++x, px += u.a11, py += u.a21) {
      if (!(px >= -eps && py >= -eps && px <= max_x + eps && py <= max_y + eps)) continue;
      const double cx = std::clamp(px, 0.0, max_x);
      const double cy = std::clamp(py, 0.0, max_y);
      int x0 = static_cast<int>(cx);
      int y0 = static_cast<int>(cy);
      if (x0 > sw - 2) x0 = std::max(sw - 2, 0);
      if (y0 > sh - 2) y0 = std::max(sh - 2, 0);
      const int x1 = std::min(x0 + 1, sw - 1);
      const int y1 = std::min(y0 + 1, sh - 1);
      const double fx = cx - x0;
      const double fy = cy - y0;
      const double* r0 = tgt + static_cast<std::size_t>(y0) * sw;
      const double* r1 = tgt + static_cast<std::size_t>(y1) * sw;
      const double v00 = r0[x0], v10 = r0[x1], v01 = r1[x0], v11 = r1[x1];
      const double top = v00 + fx * (v10 - v00);
      const double bottom = v01 + fx * (v11 - v01);
      const double value = top + fy * (bottom - top);
      const std::size_t i = static_cast<std::size_t>(y) * tw + x;
      const double xb = kParzenPad + (value - rb.lo) * rb.scale;
      const int kb = static_cast<int>(xb);
      Sample& s = samples[i];
      s.kb = kb;
      s.t = xb - kb;
      s.dx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
      s.dy = bottom - top;
      valid[i] = 1;
      alo = std::min(alo, arow[x]);
      ahi = std::max(ahi, arow[x]);
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::NoValidPixels, "warped template does not overlap the target");
  const Range ra = bin_range(alo, ahi, bins, "template");

  // Pass 2: Parzen deposit. With b = kb + t the four cubic weights for cells
  // kb-1 .. kb+2 are polynomials in t.
  const std::size_t nb = static_cast<std::size_t>(bins);
  std::vector<double> mass(nb * nb, 0.0);  // row-major [a][b]
  const auto tp = template_image.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    Sample& s = samples[i];
    const double xa = kParzenPad + (tp[i] - ra.lo) * ra.scale;
    s.ia = static_cast<int>(xa);
    s.fa = xa - s.ia;
    const double t = s.t, t2 = t * t, t3 = t2 * t, r = 1.0 - t;
    const double w[4] = {r * r * r / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                         (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0};
    double* row0 = mass.data() + static_cast<std::size_t>(s.ia) * nb + (s.kb - 1);
    const double wa0 = 1.0 - s.fa;
    for (int k = 0; k < 4; ++k) row0[k] += wa0 * w[k];
    if (s.fa > 0.0) {
      double* row1 = row0 + nb;
      for (int k = 0; k < 4; ++k) row1[k] += s.fa * w[k];
    }
  }

  const double inv_count = 1.0 / static_cast<double>(count);
  std::vector<double> pa(nb, 0.0), pb(nb, 0.0);
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      const double p = mass[a * nb + b] * inv_count;
      mass[a * nb + b] = p;
      pa[a] += p;
      pb[b] += p;
    }
  }
  MiValue out;
  std::vector<double> log_ratio(nb * nb, 0.0);
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      const double p = mass[a * nb + b];
      if (p > 0.0) {
        const double l = std::log(p / (pa[a] * pb[b]));
        log_ratio[a * nb + b] = l;
        out.mi += p * l;
      }
    }
  }

  // Pass 3: dMI = sum over cells of dp * log(p / (pa pb)); the marginal terms
  // cancel because every pixel's weights sum to one.
  std::array<double, 6> g{};
  for (int y = 0; y < th; ++y) {
    double gx_row = 0.0, gy_row = 0.0, gx_x = 0.0, gy_x = 0.0;
    for (int x = 0; x < tw; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * tw + x;
      if (!valid[i]) continue;
      const Sample& s = samples[i];
      const double t = s.t, t2 = t * t, r = 1.0 - t;
      const double dw[4] = {-0.5 * r * r, 1.5 * t2 - 2.0 * t, -1.5 * t2 + t + 0.5, 0.5 * t2};
      const double* l0 = log_ratio.data() + static_cast<std::size_t>(s.ia) * nb + (s.kb - 1);
      double acc0 = 0.0, acc1 = 0.0;
      for (int k = 0; k < 4; ++k) acc0 += dw[k] * l0[k];
      if (s.fa > 0.0) {
        const double* l1 = l0 + nb;
        for (int k = 0; k < 4; ++k) acc1 += dw[k] * l1[k];
      }
      const double dmi_db = (1.0 - s.fa) * acc0 + s.fa * acc1;
      const double gx = dmi_db * s.dx;
      const double gy = dmi_db * s.dy;
      gx_row += gx;
      gy_row += gy;
      gx_x += gx * x;
      gy_x += gy * x;
    }
    g[0] += gx_x;
    g[1] += gx_row * y;
    g[2] += gy_x;
    g[3] += gy_row * y;
    g[4] += gx_row;
    g[5] += gy_row;
  }
  const double k = rb.scale * inv_count;
  for (int j = 0; j < 6; ++j) out.gradient[j] = g[j] * k;
  return out;
}

Range target_range(const RasterImage& target, int bins) {
  const auto [lo, hi] = std::minmax_element(target.pixels().begin(), target.pixels().end());
  return bin_range(*lo, *hi, bins, "target");
}

}  // namespace

MiValue mi_objective(const RasterImage& template_image, const RasterImage& target,
                     const AffineTransform& u, int bins) {
  check_bins(bins);
  return objective_with_range(template_image, target, u, bins, target_range(target, bins));
}

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Search coordinates: linear entries about the template centre, scaled by the
// template half-size, and the image of the centre in pixels. One unit in any
// coordinate moves the template's edge by roughly one pixel.
struct Parametrization {
  double cx, cy, scale;

  Vec6 to_search(const AffineTransform& u) const {
    const Point2 c = u.apply({cx, cy});
    Vec6 z;
    z << u.a11 * scale, u.a12 * scale, u.a21 * scale, u.a22 * scale, c.x, c.y;
    return z;
  }

  AffineTransform from_search(const Vec6& z) const {
    AffineTransform u{z[0] / scale, z[1] / scale, z[2] / scale, z[3] / scale, 0.0, 0.0};
    u.tx = z[4] - (u.a11 * cx + u.a12 * cy);
    u.ty = z[5] - (u.a21 * cx + u.a22 * cy);
    return u;
  }

  Vec6 gradient(const std::array<double, 6>& g) const {
    // t = c' - A c, so d/da_jk at fixed c' picks up -c_k d/dt_j.
    Vec6 out;
    out << (g[0] - g[4] * cx) / scale, (g[1] - g[4] * cy) / scale, (g[2] - g[5] * cx) / scale,
        (g[3] - g[5] * cy) / scale, g[4], g[5];
    return out;
  }
};

}  // namespace

RegistrationResult register_affine(const RasterImage& template_image, const RasterImage& target,
                                   const AffineTransform& init, const RegistrationSettings& settings) {
  const Parametrization param{0.5 * (template_image.width() - 1), 0.5 * (template_image.height() - 1),
                              0.5 * std::max(template_image.width(), template_image.height())};

  check_bins(settings.bins);
  const Range rb = target_range(target, settings.bins);
  auto evaluate = [&](const Vec6& z, double& f, Vec6& g) {
    const MiValue v = objective_with_range(template_image, target, param.from_search(z), settings.bins, rb);
    f = v.mi;
    g = param.gradient(v.gradient);
    return std::isfinite(f) && g.allFinite();
  };

  RegistrationResult result;
  Vec6 z = param.to_search(init);
  double f = 0.0;
  Vec6 g;
  if (!evaluate(z, f, g)) throw Error(ErrorCode::Diverged, "objective is not finite at the initial transform");
  result.mi_trace.push_back(f);

  Mat6 h_inv = Mat6::Identity();
  bool steepest = true;   // h_inv is a scaled identity
  bool scaled = false;    // first curvature pair seen
  double last_step = settings.initial_step;

  int iter = 0;
  while (iter < settings.max_iters) {
    const double gnorm = g.norm();
    if (gnorm < settings.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Vec6 d;
    if (steepest) {
      d = g * (std::min(settings.initial_step, std::max(last_step, 1e-2)) / gnorm);
    } else {
      d = h_inv * g;
      if (g.dot(d) <= 0.0) {
        steepest = true;
        continue;
      }
    }
    if (d.norm() > settings.max_step) d *= settings.max_step / d.norm();

    double alpha = 1.0;
    bool accepted = false;
    bool below_tolerance = false;
    int errored = 0;
    double f_new = f;
    Vec6 g_new;
    for (int attempt = 0; attempt < settings.max_backtracks; ++attempt, alpha *= settings.backtrack) {
      if ((alpha * d).norm() < settings.step_tolerance) {
        below_tolerance = true;
        break;
      }
      const Vec6 trial = z + alpha * d;
      bool ok = false;
      try {
        ok = evaluate(trial, f_new, g_new);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoValidPixels && e.code() != ErrorCode::SingularTransform &&
            e.code() != ErrorCode::DegenerateIntensity) {
          throw;
        }
      }
      if (!ok) {
        ++errored;
        continue;
      }
      if (f_new > f + 1e-4 * alpha * g.dot(d)) {
        accepted = true;
        break;
      }
    }

    if (!accepted) {
      if (errored >= settings.max_backtracks) {
        throw Error(ErrorCode::Diverged, "every safeguarded step left the valid domain");
      }
      if (below_tolerance || steepest) {
        // No ascent left at the resolution the line search can resolve.
        result.converged = true;
        break;
      }
      h_inv.setIdentity();
      steepest = true;
      scaled = false;
      continue;
    }

    const Vec6 s = alpha * d;
    const Vec6 y = g - g_new;  // gradient change of -MI
    z += s;
    f = f_new;
    g = g_new;
    ++iter;
    result.mi_trace.push_back(f);
    last_step = s.norm();

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h_inv = Mat6::Identity() * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Mat6 left = Mat6::Identity() - rho * s * y.transpose();
      h_inv = left * h_inv * left.transpose() + rho * s * s.transpose();
      steepest = false;
    }
    if (last_step < settings.step_tolerance) {
      result.converged = true;
      break;
    }
  }

  result.transform = param.from_search(z);
  result.final_mi = f;
  result.iterations = iter;
  return result;
}

}  // namespace tplreg
