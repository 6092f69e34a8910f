#include "caai/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "caai/common.hpp"
#include "caai/image_io.hpp"

namespace caai {

namespace fs = std::filesystem;

void SyntheticSpec::validate() const {
  CAAI_CHECK(canvas >= 8, "canvas too small");
  CAAI_CHECK(num_shapes >= 1, "need at least one shape");
  CAAI_CHECK(rectangles || ellipses, "no shape kinds enabled");
  CAAI_CHECK(depth_noise_sigma >= 0 && texture_amplitude >= 0, "negative amplitude");
}

SyntheticSample render_sample(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const int s = spec.canvas;
  const size_t plane = static_cast<size_t>(s) * s;
  SyntheticSample out;
  out.size = s;
  out.rgb.assign(3 * plane, 0.0);
  out.depth.assign(plane, 0.0);
  out.gt.assign(plane, 0.0);

  // Background: per-channel base tone plus a low-frequency wave and pixel
  // noise scaled by the texture amplitude.
  double base[3], phase[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.25, 0.75);
    phase[c] = rng.uniform(0.0, 6.28318530717958647692);
  }
  const double fx = rng.uniform(0.5, 2.0) / s;
  const double fy = rng.uniform(0.5, 2.0) / s;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double angle = 6.28318530717958647692 * (fx * x + fy * y);
      for (int c = 0; c < 3; ++c) {
        const double wave = std::sin(angle + phase[c]);
        const double noise = rng.uniform(-1.0, 1.0);
        out.rgb[c * plane + y * s + x] = std::clamp(
            base[c] + spec.texture_amplitude * (0.6 * wave + 0.4 * noise), 0.0, 1.0);
      }
    }
  }

  // Background depth: far plane with a mild vertical gradient, in [0.6, 0.9].
  const double far0 = rng.uniform(0.6, 0.7);
  const double far1 = rng.uniform(0.8, 0.9);
  for (int y = 0; y < s; ++y) {
    const double d = far0 + (far1 - far0) * (static_cast<double>(y) / (s - 1));
    for (int x = 0; x < s; ++x) out.depth[y * s + x] = d;
  }

  for (int shape = 0; shape < spec.num_shapes; ++shape) {
    const bool use_rect =
        spec.rectangles && (!spec.ellipses || rng.below(2) == 0);
    const int min_half = std::max(2, s / 8);
    const int max_half = std::max(min_half + 1, s / 4);
    const int hw = min_half + static_cast<int>(rng.below(max_half - min_half));
    const int hh = min_half + static_cast<int>(rng.below(max_half - min_half));
    const int cx = hw + static_cast<int>(rng.below(std::max(1, s - 2 * hw)));
    const int cy = hh + static_cast<int>(rng.below(std::max(1, s - 2 * hh)));

    // Shape color pushed away from the background tone; nearer depth in
    // [0.15, 0.40], strictly below the background's [0.6, 0.9].
    double color[3];
    for (int c = 0; c < 3; ++c) {
      const double offset = rng.uniform(0.3, 0.5);
      color[c] = base[c] > 0.5 ? base[c] - offset : base[c] + offset;
      color[c] = std::clamp(color[c], 0.0, 1.0);
    }
    const double near_depth = rng.uniform(0.15, 0.40);

    for (int y = std::max(0, cy - hh); y < std::min(s, cy + hh); ++y) {
      for (int x = std::max(0, cx - hw); x < std::min(s, cx + hw); ++x) {
        bool inside;
        if (use_rect) {
          inside = true;
        } else {
          const double dx = (x - cx + 0.5) / hw;
          const double dy = (y - cy + 0.5) / hh;
          inside = dx * dx + dy * dy <= 1.0;
        }
        if (!inside) continue;
        const size_t i = static_cast<size_t>(y) * s + x;
        for (int c = 0; c < 3; ++c) out.rgb[c * plane + i] = color[c];
        out.depth[i] = near_depth;
        out.gt[i] = 1.0;
      }
    }
  }

  if (spec.depth_noise_sigma > 0) {
    for (double& d : out.depth) {
      d = std::clamp(d + spec.depth_noise_sigma * rng.normal(), 0.0, 1.0);
    }
  }
  return out;
}

void generate_synthetic(const SyntheticSpec& spec, int n, std::uint64_t seed,
                        const std::string& out_dir) {
  spec.validate();
  CAAI_CHECK(n >= 1, "generate_synthetic: n must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir + "/RGB", ec);
  fs::create_directories(out_dir + "/depth", ec);
  fs::create_directories(out_dir + "/GT", ec);
  if (!fs::is_directory(out_dir + "/GT")) fail("cannot create dataset under '" + out_dir + "'");

  const int s = spec.canvas;
  const size_t plane = static_cast<size_t>(s) * s;
  for (int i = 0; i < n; ++i) {
    // Independent per-sample stream so sample i does not depend on how many
    // samples were generated before it.
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(i) * 0xbf58476d1ce4e5b9ULL);
    const auto sample = render_sample(spec, rng);

    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04d", i);

    Image rgb;
    rgb.width = rgb.height = s;
    rgb.channels = 3;
    rgb.data.resize(3 * plane);
    for (size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = sample.rgb[c * plane + p];
    }
    write_png8(out_dir + "/RGB/" + name + ".png", rgb);

    write_png16_gray(out_dir + "/depth/" + name + ".png", sample.depth, s, s);

    Image gt;
    gt.width = gt.height = s;
    gt.channels = 1;
    gt.data = sample.gt;
    write_png8(out_dir + "/GT/" + name + ".png", gt);
  }
}

}  // namespace caai
