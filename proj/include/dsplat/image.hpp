#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dsplat/common.hpp"
#include "dsplat/gaussian.hpp"

namespace dsplat {

struct Image {
  int width = 0, height = 0;
  std::vector<Vector3d> pixels;  // row-major, channels in [0,1]

  Image() = default;
  Image(int w, int h, const Vector3d& fill = Vector3d::Zero())
      : width(w), height(h), pixels(size_t(w) * h, fill) {}

  Vector3d& at(int x, int y) { return pixels[size_t(y) * width + x]; }
  const Vector3d& at(int x, int y) const { return pixels[size_t(y) * width + x]; }

  void clamp01() {
    for (auto& p : pixels) p = p.cwiseMax(0.0).cwiseMin(1.0);
  }
};

struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> depth;  // +inf where nothing contributes

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), depth(size_t(w) * h, std::numeric_limits<double>::infinity()) {}

  double& at(int x, int y) { return depth[size_t(y) * width + x]; }
  double at(int x, int y) const { return depth[size_t(y) * width + x]; }
};

inline uint8_t quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

inline void write_ppm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(size_t(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Vector3d& p = img.at(x, y);
      row[size_t(x) * 3 + 0] = quantize8(p.x());
      row[size_t(x) * 3 + 1] = quantize8(p.y());
      row[size_t(x) * 3 + 2] = quantize8(p.z());
    }
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!f) throw IoError("write failed: " + path);
}

namespace detail {
inline int ppm_next_int(std::istream& s) {
  // skips whitespace and '#' comments per the netpbm grammar
  int c = s.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = s.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = s.get();
  }
  if (c == EOF) throw IoError("ppm: truncated header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = s.get();
  }
  return v;
}
}  // namespace detail

inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("ppm: not a P6 file: " + path);
  const int w = detail::ppm_next_int(f);
  const int h = detail::ppm_next_int(f);
  const int maxval = detail::ppm_next_int(f);
  if (maxval != 255) throw IoError("ppm: only maxval 255 supported: " + path);
  Image img(w, h);
  std::vector<uint8_t> row(size_t(w) * 3);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
    if (!f) throw IoError("ppm: truncated pixel data: " + path);
    for (int x = 0; x < w; ++x)
      img.at(x, y) = Vector3d(row[size_t(x) * 3] / 255.0, row[size_t(x) * 3 + 1] / 255.0,
                              row[size_t(x) * 3 + 2] / 255.0);
  }
  return img;
}

// Binary depth format: magic DSDEPTH1, int32 dims, row-major float32.
inline void write_depth(const DepthMap& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f.write("DSDEPTH1", 8);
  const int32_t wh[2] = {d.width, d.height};
  f.write(reinterpret_cast<const char*>(wh), 8);
  std::vector<float> buf(d.depth.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(d.depth[i]);
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
  if (!f) throw IoError("write failed: " + path);
}

inline DepthMap read_depth(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "DSDEPTH1") throw IoError("depth: bad magic: " + path);
  int32_t wh[2];
  f.read(reinterpret_cast<char*>(wh), 8);
  DepthMap d(wh[0], wh[1]);
  std::vector<float> buf(d.depth.size());
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
  if (!f) throw IoError("depth: truncated: " + path);
  for (size_t i = 0; i < buf.size(); ++i) d.depth[i] = buf[i];
  return d;
}

}  // namespace dsplat
