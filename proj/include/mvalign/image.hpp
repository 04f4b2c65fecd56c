#pragma once

// Colour images, depth maps and their file formats (binary PPM, PFM).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mvalign/errors.hpp"
#include "mvalign/tensor.hpp"
#include "mvalign/tensor_io.hpp"

namespace mvalign {

/// Interleaved H×W×C float image, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  std::vector<unsigned char> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w),
        height(h),
        values(static_cast<std::size_t>(w) * h, 0.0f),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  static DepthMap constant(int w, int h, float z) {
    DepthMap d(w, h);
    std::fill(d.values.begin(), d.values.end(), z);
    std::fill(d.valid.begin(), d.valid.end(), 1);
    return d;
  }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  float value(int x, int y) const { return values[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  std::size_t valid_count() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1)); }
};

/// Image as an [H×W×C] tensor.
template <class T = float>
BasicTensor<T> image_to_tensor(const Image& img) {
  std::vector<T> data(img.data.begin(), img.data.end());
  return BasicTensor<T>(Shape{static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width),
                              static_cast<std::size_t>(img.channels)},
                        std::move(data));
}

template <class T>
Image tensor_to_image(const BasicTensor<T>& t) {
  if (t.rank() != 3) throw DimensionError("tensor_to_image: expected [H×W×C], got " + shape_str(t.shape()));
  Image img(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(0)), static_cast<int>(t.dim(2)));
  std::transform(t.data().begin(), t.data().end(), img.data.begin(), [](T v) { return static_cast<float>(v); });
  return img;
}

/// Mean over factor×factor blocks.
inline Image block_downsample(const Image& img, int factor) {
  if (factor < 1 || img.width % factor != 0 || img.height % factor != 0) {
    throw DimensionError("block_downsample: factor " + std::to_string(factor) + " does not divide the image");
  }
  Image out(img.width / factor, img.height / factor, img.channels);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) s += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = static_cast<float>(s * inv);
      }
  return out;
}

inline Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image g(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      g.at(x, y, 0) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2);
  return g;
}

namespace detail {

inline std::string read_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c)) {
    if (c == '#') {
      std::string line;
      std::getline(is, line);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  if (tok.empty()) throw FormatError("unexpected end of header");
  return tok;
}

}  // namespace detail

/// Binary 8-bit PPM (P6). Values are clamped to [0,1] and rounded.
inline void save_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw DimensionError("save_ppm: need 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("PPM write failed: " + path.string());
}

inline Image load_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  if (detail::read_token(is) != "P6") throw FormatError(path.string() + " is not a binary PPM");
  const int w = std::stoi(detail::read_token(is));
  const int h = std::stoi(detail::read_token(is));
  const int maxval = std::stoi(detail::read_token(is));
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("unsupported PPM header in " + path.string());
  Image img(w, h, 3);
  std::vector<unsigned char> bytes(img.data.size());
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError("truncated PPM " + path.string());
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0f;
  return img;
}

/// Greyscale PFM ("Pf", scale −1 = little-endian, bottom row first). Invalid pixels are stored as +inf.
inline void save_pfm(const std::filesystem::path& path, const DepthMap& depth) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
  for (int y = depth.height - 1; y >= 0; --y)
    for (int x = 0; x < depth.width; ++x) {
      const float v = depth.is_valid(x, y) ? depth.value(x, y) : std::numeric_limits<float>::infinity();
      detail::put_f32(os, v);
    }
  if (!os) throw FormatError("PFM write failed: " + path.string());
}

inline DepthMap load_pfm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  if (detail::read_token(is) != "Pf") throw FormatError(path.string() + " is not a greyscale PFM");
  const int w = std::stoi(detail::read_token(is));
  const int h = std::stoi(detail::read_token(is));
  const double scale = std::stod(detail::read_token(is));
  if (w <= 0 || h <= 0) throw FormatError("bad PFM size in " + path.string());
  if (scale >= 0.0) throw FormatError("big-endian PFM not supported: " + path.string());
  DepthMap d(w, h);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      const float v = detail::get_f32(is);
      const bool ok = std::isfinite(v);
      d.values[d.index(x, y)] = ok ? v : 0.0f;
      d.valid[d.index(x, y)] = ok ? 1 : 0;
    }
  return d;
}

}  // namespace mvalign
