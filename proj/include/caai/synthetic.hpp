#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caai/rng.hpp"

namespace caai {

/// Recipe for synthetic RGB-D samples: textured background, one or more
/// salient shapes rendered nearer to the camera (lower depth values) than
/// the background, ground truth equal to the union of the shape rasters.
struct SyntheticSpec {
  int canvas = 64;
  int num_shapes = 1;
  bool rectangles = true;
  bool ellipses = true;
  double depth_noise_sigma = 0.02;
  double texture_amplitude = 0.08;

  void validate() const;
};

struct SyntheticSample {
  int size = 0;
  std::vector<double> rgb;    // 3 planes (CHW)
  std::vector<double> depth;  // 1 plane, before and after noise both in [0,1]
  std::vector<double> gt;     // 1 plane in {0,1}
};

/// Renders one sample from the given stream of randomness.
SyntheticSample render_sample(const SyntheticSpec& spec, Rng& rng);

/// Writes n samples in the RGB/ + depth/ + GT/ layout (RGB 8-bit color PNG,
/// depth 16-bit gray PNG, GT binary 8-bit PNG). Identical (spec, n, seed)
/// produce byte-identical files.
void generate_synthetic(const SyntheticSpec& spec, int n, std::uint64_t seed,
                        const std::string& out_dir);

}  // namespace caai
