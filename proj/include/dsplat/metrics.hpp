#pragma once

#include <array>
#include <cmath>

#include "dsplat/image.hpp"

namespace dsplat {

constexpr double kPsnrCap = 99.0;

inline double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidInputError("psnr: dimension mismatch");
  double sq = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) sq += (a.pixels[i] - b.pixels[i]).squaredNorm();
  const double mse = sq / (3.0 * double(a.pixels.size()));
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {
// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
inline const std::array<double, 121>& ssim_window() {
  static const std::array<double, 121> w = [] {
    std::array<double, 121> out{};
    double sum = 0.0;
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) {
        const double dx = x - 5, dy = y - 5;
        out[size_t(y) * 11 + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        sum += out[size_t(y) * 11 + x];
      }
    for (auto& v : out) v /= sum;
    return out;
  }();
  return w;
}
}  // namespace detail

// Mean local SSIM over all fully-contained 11x11 windows, per channel,
// averaged. When grad_a is non-null it receives d(mean SSIM)/d(a).
inline double ssim(const Image& a, const Image& b, Image* grad_a = nullptr) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidInputError("ssim: dimension mismatch");
  if (a.width < 11 || a.height < 11)
    throw InvalidInputError("ssim: image smaller than 11x11 window");
  const auto& w = detail::ssim_window();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  if (grad_a) *grad_a = Image(a.width, a.height);
  const int nx = a.width - 10, ny = a.height - 10;
  const double norm = 1.0 / (double(nx) * ny * 3.0);
  double total = 0.0;
  for (int wy = 0; wy < ny; ++wy) {
    for (int wx = 0; wx < nx; ++wx) {
      for (int ch = 0; ch < 3; ++ch) {
        double mu_x = 0, mu_y = 0, xx = 0, yy = 0, xy = 0;
        for (int j = 0; j < 11; ++j)
          for (int i = 0; i < 11; ++i) {
            const double wk = w[size_t(j) * 11 + i];
            const double xv = a.at(wx + i, wy + j)[ch];
            const double yv = b.at(wx + i, wy + j)[ch];
            mu_x += wk * xv;
            mu_y += wk * yv;
            xx += wk * xv * xv;
            yy += wk * yv * yv;
            xy += wk * xv * yv;
          }
        const double sx = xx - mu_x * mu_x;
        const double sy = yy - mu_y * mu_y;
        const double sxy = xy - mu_x * mu_y;
        const double a1 = 2 * mu_x * mu_y + c1, a2 = 2 * sxy + c2;
        const double b1 = mu_x * mu_x + mu_y * mu_y + c1, b2 = sx + sy + c2;
        const double s = (a1 * a2) / (b1 * b2);
        total += s;
        if (grad_a) {
          const double inv_bb = 1.0 / (b1 * b2);
          for (int j = 0; j < 11; ++j)
            for (int i = 0; i < 11; ++i) {
              const double wk = w[size_t(j) * 11 + i];
              const double xv = a.at(wx + i, wy + j)[ch];
              const double yv = b.at(wx + i, wy + j)[ch];
              const double ds = wk * ((2 * mu_y * a2 + 2 * (yv - mu_y) * a1) * inv_bb -
                                      s * (2 * mu_x / b1 + 2 * (xv - mu_x) / b2));
              grad_a->at(wx + i, wy + j)[ch] += ds * norm;
            }
        }
      }
    }
  }
  return total * norm;
}

}  // namespace dsplat
