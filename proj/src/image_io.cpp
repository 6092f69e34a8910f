#include "caai/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>

#include <jpeglib.h>
#include <png.h>

namespace caai {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open image '" + path + "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  CAAI_CHECK(png != nullptr, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("failed to decode PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  // Normalize exotic layouts: palettes to RGB, sub-byte gray to 8 bits,
  // transparency dropped. 16-bit stays 16-bit (big-endian per PNG spec).
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  CAAI_CHECK(channels == 1 || channels == 3,
             "unsupported channel count in '" + path + "'");

  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raw(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.bit_depth = bit_depth;
  img.data.resize(static_cast<size_t>(width) * height * channels);
  const size_t n = img.data.size();
  if (bit_depth == 16) {
    for (size_t i = 0; i < n; ++i) {
      const std::uint16_t v = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
      img.data[i] = v / 65535.0;
    }
  } else {
    for (size_t i = 0; i < n; ++i) img.data[i] = raw[i] / 255.0;
  }
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

Image read_jpeg(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open image '" + path + "'");

  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail("failed to decode JPEG '" + path + "'");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);

  const int width = static_cast<int>(cinfo.output_width);
  const int height = static_cast<int>(cinfo.output_height);
  const int channels = cinfo.output_components;
  CAAI_CHECK(channels == 1 || channels == 3, "unsupported JPEG layout in '" + path + "'");

  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.bit_depth = 8;
  img.data.resize(static_cast<size_t>(width) * height * channels);
  std::vector<std::uint8_t> row(static_cast<size_t>(width) * channels);
  JSAMPROW rowp = row.data();
  size_t off = 0;
  while (cinfo.output_scanline < cinfo.output_height) {
    jpeg_read_scanlines(&cinfo, &rowp, 1);
    for (size_t i = 0; i < row.size(); ++i) img.data[off + i] = row[i] / 255.0;
    off += row.size();
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

Image read_image(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open image '" + path + "'");
  std::uint8_t sig[8] = {0};
  const size_t got = std::fread(sig, 1, 8, fp.get());
  fp.reset();
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (got >= 2 && sig[0] == 0xFF && sig[1] == 0xD8) return read_jpeg(path);
  fail("'" + path + "' is neither PNG nor JPEG");
}

void write_png8(const std::string& path, const Image& img) {
  CAAI_CHECK(img.channels == 1 || img.channels == 3, "write_png8 supports 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot write image '" + path + "'");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  CAAI_CHECK(png != nullptr, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("failed to encode PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const size_t rowlen = static_cast<size_t>(img.width) * img.channels;
  std::vector<std::uint8_t> row(rowlen);
  for (int y = 0; y < img.height; ++y) {
    for (size_t i = 0; i < rowlen; ++i) {
      const double v = img.data[y * rowlen + i];
      row[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png16_gray(const std::string& path, const std::vector<double>& plane, int width,
                      int height) {
  CAAI_CHECK(static_cast<size_t>(width) * height == plane.size(), "plane size mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot write image '" + path + "'");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  CAAI_CHECK(png != nullptr, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("failed to encode PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(static_cast<size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = std::clamp(plane[static_cast<size_t>(y) * width + x], 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      row[2 * x] = static_cast<std::uint8_t>(q >> 8);  // network byte order
      row[2 * x + 1] = static_cast<std::uint8_t>(q & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------------------
// resize
// ---------------------------------------------------------------------------

std::vector<double> bilinear_resize_plane(const std::vector<double>& src, int sw, int sh,
                                          int dw, int dh) {
  CAAI_CHECK(static_cast<size_t>(sw) * sh == src.size(), "bilinear_resize: bad plane size");
  CAAI_CHECK(dw >= 1 && dh >= 1, "bilinear_resize: non-positive target");
  if (sw == dw && sh == dh) return src;
  std::vector<double> dst(static_cast<size_t>(dw) * dh);
  const double sx = static_cast<double>(sw) / dw;
  const double sy = static_cast<double>(sh) / dh;
  for (int y = 0; y < dh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const double top = src[y0 * sw + x0] * (1 - wx) + src[y0 * sw + x1] * wx;
      const double bot = src[y1 * sw + x0] * (1 - wx) + src[y1 * sw + x1] * wx;
      dst[static_cast<size_t>(y) * dw + x] = top * (1 - wy) + bot * wy;
    }
  }
  return dst;
}

// ---------------------------------------------------------------------------
// dataset layout
// ---------------------------------------------------------------------------

namespace {

const char* kImageExts[] = {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"};

bool has_image_ext(const fs::path& p) {
  const std::string ext = p.extension().string();
  for (const char* e : kImageExts) {
    if (ext == e) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> list_image_stems(const std::string& dir) {
  if (!fs::is_directory(dir)) fail("'" + dir + "' is not a directory");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_ext(entry.path())) {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  stems.erase(std::unique(stems.begin(), stems.end()), stems.end());
  return stems;
}

std::optional<std::string> find_image_file(const std::string& dir, const std::string& stem) {
  for (const char* ext : kImageExts) {
    const std::string candidate = dir + "/" + stem + ext;
    if (fs::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

std::vector<std::string> list_stems(const DatasetLayout& layout, bool require_gt) {
  auto stems = list_image_stems(layout.rgb_dir());
  for (const auto& stem : stems) {
    if (!find_image_file(layout.depth_dir(), stem)) {
      fail("missing depth image for stem '" + stem + "' in " + layout.depth_dir());
    }
    if (require_gt && !find_image_file(layout.gt_dir(), stem)) {
      fail("missing ground-truth image for stem '" + stem + "' in " + layout.gt_dir());
    }
  }
  if (stems.empty()) fail("no samples found under '" + layout.root + "'");
  return stems;
}

// ---------------------------------------------------------------------------
// sample loading
// ---------------------------------------------------------------------------

namespace {

// Interleaved image -> per-channel planes resized to size x size.
std::vector<double> to_resized_planes(const Image& img, int channels, int size) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(channels) * size * size);
  std::vector<double> plane(static_cast<size_t>(img.width) * img.height);
  for (int c = 0; c < channels; ++c) {
    const int src_c = img.channels == 1 ? 0 : c;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) plane[y * img.width + x] = img.at(y, x, src_c);
    }
    auto resized = bilinear_resize_plane(plane, img.width, img.height, size, size);
    out.insert(out.end(), resized.begin(), resized.end());
  }
  return out;
}

}  // namespace

LoadedSample load_sample(const std::string& stem, const DatasetLayout& layout,
                         int target_size, bool want_gt) {
  CAAI_CHECK(target_size >= 1, "load_sample: non-positive target size");
  LoadedSample s;
  s.size = target_size;

  const auto rgb_path = find_image_file(layout.rgb_dir(), stem);
  if (!rgb_path) fail("missing RGB image for stem '" + stem + "'");
  const Image rgb = read_image(*rgb_path);
  s.orig_width = rgb.width;
  s.orig_height = rgb.height;
  s.rgb = to_resized_planes(rgb, 3, target_size);

  const auto depth_path = find_image_file(layout.depth_dir(), stem);
  if (!depth_path) fail("missing depth image for stem '" + stem + "'");
  Image depth = read_image(*depth_path);
  CAAI_CHECK(depth.channels == 1, "depth image '" + *depth_path + "' must be single-channel");
  // Per-image min-max normalization; robust to mixed 8/16-bit sources with
  // arbitrary ranges.
  double lo = 1.0, hi = 0.0;
  for (const double v : depth.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo <= 0.0) {
    std::cerr << "warning: depth image for '" << stem
              << "' has zero range; using a constant 0.5 map\n";
    std::fill(depth.data.begin(), depth.data.end(), 0.5);
  } else {
    for (double& v : depth.data) v = (v - lo) / (hi - lo);
  }
  s.depth = to_resized_planes(depth, 1, target_size);

  if (want_gt) {
    const auto gt_path = find_image_file(layout.gt_dir(), stem);
    if (!gt_path) fail("missing ground-truth image for stem '" + stem + "'");
    const Image gt = read_image(*gt_path);
    auto plane = to_resized_planes(gt, 1, target_size);
    for (double& v : plane) v = v > 0.5 ? 1.0 : 0.0;
    s.gt = std::move(plane);
    s.has_gt = true;
  }
  return s;
}

template <typename T>
TensorT<T> planes_to_tensor(const std::vector<double>& planes, int channels, int size) {
  CAAI_CHECK(planes.size() == static_cast<size_t>(channels) * size * size,
             "planes_to_tensor: size mismatch");
  std::vector<T> data(planes.size());
  for (size_t i = 0; i < planes.size(); ++i) data[i] = static_cast<T>(planes[i]);
  return TensorT<T>::from_vector({channels, size, size}, std::move(data));
}

template TensorT<float> planes_to_tensor<float>(const std::vector<double>&, int, int);
template TensorT<double> planes_to_tensor<double>(const std::vector<double>&, int, int);

}  // namespace caai
