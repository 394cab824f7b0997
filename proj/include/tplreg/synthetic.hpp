#pragma once

#include <cstdint>

#include "tplreg/image.hpp"

namespace tplreg {

struct FundusOptions {
  int vessel_trunks = 7;
  double vessel_contrast = 0.4;
  double max_vessel_width = 9.0;
};

/// Fundus-like test image: a vignetted disk with multi-scale background
/// texture, a bright optic disc and a branching network of dark Bezier tubes.
RasterImage synthetic_fundus(int width, int height, std::uint64_t seed,
                             const FundusOptions& options = {});

/// Smooth random intensity field in [0,1]: white noise at `cell`-pixel
/// resolution, bilinearly upsampled and blurred.
RasterImage smooth_noise(int width, int height, double cell, std::uint64_t seed);

}  // namespace tplreg
