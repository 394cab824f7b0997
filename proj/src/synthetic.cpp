#include "tplreg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace tplreg {

namespace {

struct Field {
  int w, h;
  std::vector<double> v;
  Field(int w_, int h_, double fill = 0.0) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, fill) {}
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

std::vector<double> noise_field(int width, int height, double cell, std::mt19937_64& rng) {
  const int gw = std::max(2, static_cast<int>(std::ceil(width / cell)) + 2);
  const int gh = std::max(2, static_cast<int>(std::ceil(height / cell)) + 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (double& g : grid) g = normal(rng);
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double gy = y / cell;
    const int y0 = std::min(static_cast<int>(gy), gh - 2);
    const double fy = gy - y0;
    // smoothstep weights keep the upsampled field free of creases
    const double sy = fy * fy * (3.0 - 2.0 * fy);
    for (int x = 0; x < width; ++x) {
      const double gx = x / cell;
      const int x0 = std::min(static_cast<int>(gx), gw - 2);
      const double fx = gx - x0;
      const double sx = fx * fx * (3.0 - 2.0 * fx);
      const double a = grid[static_cast<std::size_t>(y0) * gw + x0];
      const double b = grid[static_cast<std::size_t>(y0) * gw + x0 + 1];
      const double c = grid[static_cast<std::size_t>(y0 + 1) * gw + x0];
      const double d = grid[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1];
      out[static_cast<std::size_t>(y) * width + x] =
          (1 - sy) * ((1 - sx) * a + sx * b) + sy * ((1 - sx) * c + sx * d);
    }
  }
  return out;
}

struct Vec {
  double x, y;
};

Vec bezier(const Vec& p0, const Vec& p1, const Vec& p2, const Vec& p3, double t) {
  const double u = 1.0 - t;
  const double a = u * u * u, b = 3 * u * u * t, c = 3 * u * t * t, d = t * t * t;
  return {a * p0.x + b * p1.x + c * p2.x + d * p3.x, a * p0.y + b * p1.y + c * p2.y + d * p3.y};
}

class VesselPainter {
 public:
  VesselPainter(int w, int h, std::mt19937_64& rng, double side) : depth_(w, h), rng_(rng), side_(side) {}

  void grow(Vec start, double angle, double width, int generation) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Vec p = start;
    double a = angle;
    while (width >= 1.2 && generation < 7) {
      const double len = side_ * (0.08 + 0.10 * uni(rng_));
      const double bend1 = (uni(rng_) - 0.5) * 0.9;
      const double bend2 = (uni(rng_) - 0.5) * 0.9;
      const Vec p3{p.x + len * std::cos(a + bend1 + bend2), p.y + len * std::sin(a + bend1 + bend2)};
      const Vec p1{p.x + len / 3 * std::cos(a), p.y + len / 3 * std::sin(a)};
      const Vec p2{p3.x - len / 3 * std::cos(a + bend1 + 2 * bend2), p3.y - len / 3 * std::sin(a + bend1 + 2 * bend2)};
      stroke(p, p1, p2, p3, width, width * 0.88);
      a = a + bend1 + 2 * bend2;
      p = p3;
      width *= 0.88;
      if (p.x < -side_ * 0.2 || p.y < -side_ * 0.2 || p.x > depth_.w + side_ * 0.2 ||
          p.y > depth_.h + side_ * 0.2) {
        return;
      }
      if (uni(rng_) < 0.55) {
        const double sign = uni(rng_) < 0.5 ? -1.0 : 1.0;
        grow(p, a + sign * (0.5 + 0.6 * uni(rng_)), width * 0.75, generation + 1);
      }
      ++generation;
    }
  }

  Field& depth() { return depth_; }

 private:
  void stroke(Vec p0, Vec p1, Vec p2, Vec p3, double w0, double w1) {
    const double approx_len = std::hypot(p3.x - p0.x, p3.y - p0.y) * 1.3 + 1.0;
    const int steps = static_cast<int>(approx_len / 0.75) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      stamp(bezier(p0, p1, p2, p3, t), w0 + (w1 - w0) * t);
    }
  }

  void stamp(Vec c, double width) {
    const double sigma = width / 2.5;
    const int r = static_cast<int>(std::ceil(2.5 * sigma)) + 1;
    const int x0 = std::max(0, static_cast<int>(c.x) - r), x1 = std::min(depth_.w - 1, static_cast<int>(c.x) + r);
    const int y0 = std::max(0, static_cast<int>(c.y) - r), y1 = std::min(depth_.h - 1, static_cast<int>(c.y) + r);
    const double strength = std::min(1.0, 0.45 + width / 12.0);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
        const double v = strength * std::exp(-0.5 * d2 / (sigma * sigma));
        double& cell = depth_.at(x, y);
        cell = std::max(cell, v);
      }
    }
  }

  Field depth_;
  std::mt19937_64& rng_;
  double side_;
};

}  // namespace

RasterImage smooth_noise(int width, int height, double cell, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> f = noise_field(width, height, cell, rng);
  for (double& v : f) v = 0.5 + 0.15 * v;
  return RasterImage(width, height, std::move(f));
}

RasterImage synthetic_fundus(int width, int height, std::uint64_t seed, const FundusOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double side = std::max(width, height);

  // Multi-octave background texture.
  std::vector<double> texture(static_cast<std::size_t>(width) * height, 0.0);
  const double octaves[][2] = {{side / 5.0, 0.10}, {side / 16.0, 0.06}, {side / 50.0, 0.035}, {4.0, 0.02}};
  for (const auto& o : octaves) {
    const std::vector<double> f = noise_field(width, height, o[0], rng);
    for (std::size_t i = 0; i < texture.size(); ++i) texture[i] += o[1] * f[i];
  }

  const double cx = width * (0.4 + 0.2 * uni(rng));
  const double cy = height * (0.4 + 0.2 * uni(rng));
  const double radius = 0.78 * side;
  const double disc_x = width * (0.2 + 0.6 * uni(rng));
  const double disc_y = height * (0.3 + 0.4 * uni(rng));
  const double disc_sigma = 0.035 * side;

  VesselPainter painter(width, height, rng, side);
  const double base_angle = uni(rng) * 2.0 * std::numbers::pi;
  for (int k = 0; k < options.vessel_trunks; ++k) {
    const double a = base_angle + 2.0 * std::numbers::pi * k / options.vessel_trunks + 0.3 * (uni(rng) - 0.5);
    painter.grow({disc_x, disc_y}, a, options.max_vessel_width * (0.7 + 0.3 * uni(rng)), 0);
  }
  // A few vessels entering from the border keep distant regions textured.
  for (int k = 0; k < options.vessel_trunks; ++k) {
    const double t = uni(rng);
    Vec start{};
    double a = 0.0;
    switch (k % 4) {
      case 0: start = {t * width, 0.0}; a = std::numbers::pi / 2; break;
      case 1: start = {t * width, static_cast<double>(height)}; a = -std::numbers::pi / 2; break;
      case 2: start = {0.0, t * height}; a = 0.0; break;
      default: start = {static_cast<double>(width), t * height}; a = std::numbers::pi; break;
    }
    painter.grow(start, a + 0.6 * (uni(rng) - 0.5), options.max_vessel_width * 0.6, 1);
  }
  Field& depth = painter.depth();

  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (radius * radius);
      const double vignette = std::max(0.15, 1.0 - 0.8 * r2);
      const double d2 = (x - disc_x) * (x - disc_x) + (y - disc_y) * (y - disc_y);
      const double disc = 0.35 * std::exp(-0.5 * d2 / (disc_sigma * disc_sigma));
      double v = (0.42 + texture[i]) * vignette + disc;
      v *= 1.0 - options.vessel_contrast * depth.v[i];
      out[i] = v;
    }
  }
  return RasterImage(width, height, std::move(out));
}

}  // namespace tplreg
