#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caai/tensor.hpp"

namespace caai {

/// Decoded image: `channels` interleaved planes of raw sample values scaled
/// to [0,1] (8-bit /255, 16-bit /65535). Data is row-major, channel-last.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 or 3
  int bit_depth = 8;  // source depth: 8 or 16
  std::vector<double> data;

  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

/// Reads a PNG (8- or 16-bit gray, 8-bit RGB; palette/alpha are folded) or an
/// 8-bit JPEG, dispatching on file signature.
Image read_image(const std::string& path);

/// Writes an 8-bit PNG; channels must be 1 or 3, values clamped to [0,1] and
/// quantized with rounding.
void write_png8(const std::string& path, const Image& img);

/// Writes a 16-bit single-channel PNG.
void write_png16_gray(const std::string& path, const std::vector<double>& plane, int width,
                      int height);

/// Resizes one plane with bilinear interpolation, half-pixel centers. This is
/// the same mapping the differentiable resample op uses.
std::vector<double> bilinear_resize_plane(const std::vector<double>& src, int sw, int sh,
                                          int dw, int dh);

// ---- dataset ingestion ----

/// Root directory with RGB/, depth/ and GT/ subdirectories; sample identity
/// is the filename stem.
struct DatasetLayout {
  std::string root;

  std::string rgb_dir() const { return root + "/RGB"; }
  std::string depth_dir() const { return root + "/depth"; }
  std::string gt_dir() const { return root + "/GT"; }
};

/// Stems present in the layout. With require_gt, every stem must appear in
/// all three subdirectories; otherwise RGB/ and depth/ suffice.
std::vector<std::string> list_stems(const DatasetLayout& layout, bool require_gt);

/// Filename stems (sorted, extension stripped) of image files directly in a
/// directory.
std::vector<std::string> list_image_stems(const std::string& dir);

/// Finds <dir>/<stem>.<ext> for the known image extensions.
std::optional<std::string> find_image_file(const std::string& dir, const std::string& stem);

struct LoadedSample {
  std::vector<double> rgb;    // 3 x S x S planes (CHW)
  std::vector<double> depth;  // 1 x S x S, min-max normalized
  std::vector<double> gt;     // 1 x S x S in {0,1}; empty when absent
  bool has_gt = false;
  int size = 0;
  int orig_width = 0;   // RGB image size before resizing
  int orig_height = 0;
};

/// Loads one sample: RGB scaled to [0,1], depth min-max normalized per image
/// (constant depth becomes 0.5 with a warning), GT thresholded at 0.5, all
/// bilinearly resized to target_size.
LoadedSample load_sample(const std::string& stem, const DatasetLayout& layout,
                         int target_size, bool want_gt);

/// CHW double planes -> tensor of T with given channel count.
template <typename T>
TensorT<T> planes_to_tensor(const std::vector<double>& planes, int channels, int size);

}  // namespace caai
