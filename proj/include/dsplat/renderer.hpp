#pragma once

#include <algorithm>
#include <numeric>
#include <thread>
#include <vector>

#include "dsplat/image.hpp"

namespace dsplat {

constexpr double kAlphaClamp = 0.99;
constexpr double kAlphaSkip = 1.0 / 255.0;
constexpr double kDepthAlphaMin = 1e-4;
constexpr double kSplatRadiusSigma = 3.5;  // beyond this alpha < 1/255 for opacity <= 1

// One splat finalized for a frame: post-deformation, post-opacity-modulation,
// already projected. `id` breaks depth ties so compositing is deterministic.
struct SplatInput {
  int id = 0;
  Vector2d mu2d = Vector2d::Zero();
  Matrix2d cov2d = Matrix2d::Identity();
  double depth = 0;
  double opacity = 0;  // sigma_i in the compositing equation
  Vector3d color = Vector3d::Zero();
};

struct Contribution {
  int32_t splat;        // index into the input splat list
  double alpha;         // post-clamp
  double trans_before;  // transmittance in front of this splat
};

struct RenderResult {
  Image image;
  DepthMap depth;
  std::vector<double> transmittance;               // per pixel, row-major
  std::vector<std::vector<Contribution>> contribs;  // per pixel, front-to-back
  Vector3d background = Vector3d::Zero();
  bool retained = false;
};

struct SplatGrad {
  Vector2d d_mu2d = Vector2d::Zero();
  Matrix2d d_cov2d = Matrix2d::Zero();  // full-matrix convention
  double d_opacity = 0;
  Vector3d d_color = Vector3d::Zero();
};

namespace detail {

struct SplatAux {
  Matrix2d q;  // inverse 2D covariance
  int x0, x1, y0, y1;
  bool on_screen;
};

inline SplatAux splat_aux(const SplatInput& s, int width, int height) {
  SplatAux a;
  const double det = s.cov2d.determinant();
  if (det <= 0) throw NumericalError("render: 2D covariance not positive definite");
  a.q << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, -s.cov2d(1, 0) / det, s.cov2d(0, 0) / det;
  const double tr = s.cov2d.trace();
  const double lam_max = 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4 * det)));
  const double r = kSplatRadiusSigma * std::sqrt(lam_max);
  a.x0 = std::max(0, int(std::ceil(s.mu2d.x() - r)));
  a.x1 = std::min(width - 1, int(std::floor(s.mu2d.x() + r)));
  a.y0 = std::max(0, int(std::ceil(s.mu2d.y() - r)));
  a.y1 = std::min(height - 1, int(std::floor(s.mu2d.y() + r)));
  a.on_screen = a.x0 <= a.x1 && a.y0 <= a.y1;
  return a;
}

template <typename Fn>
inline void parallel_rows(int height, int threads, Fn&& fn) {
  if (threads <= 1) {
    fn(0, height, 0);
    return;
  }
  const int n = std::min(threads, height);
  std::vector<std::thread> pool;
  pool.reserve(size_t(n));
  for (int w = 0; w < n; ++w) {
    const int y0 = height * w / n, y1 = height * (w + 1) / n;
    pool.emplace_back([&fn, y0, y1, w] { fn(y0, y1, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

// Depth-sorted front-to-back alpha compositing (Eq.-2 style): per splat
// alpha_i = sigma_i * exp(-0.5 d^T cov2d^{-1} d) clamped to kAlphaClamp,
// contributions below kAlphaSkip dropped, remaining transmittance times the
// background added at the end. Depth is the alpha-weighted mean.
inline RenderResult render(const std::vector<SplatInput>& splats, int width, int height,
                           const Vector3d& background, int threads = 1, bool retain = true) {
  RenderResult out;
  out.image = Image(width, height, background);
  out.depth = DepthMap(width, height);
  out.transmittance.assign(size_t(width) * height, 1.0);
  out.contribs.resize(size_t(width) * height);
  out.background = background;
  out.retained = retain;

  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
    return splats[a].id < splats[b].id;
  });

  std::vector<detail::SplatAux> aux(splats.size());
  for (size_t i = 0; i < splats.size(); ++i) aux[i] = detail::splat_aux(splats[i], width, height);

  detail::parallel_rows(height, threads, [&](int row0, int row1, int) {
    for (int y = row0; y < row1; ++y) {
      for (int s : order) {
        const auto& a = aux[size_t(s)];
        if (!a.on_screen || y < a.y0 || y > a.y1) continue;
        const auto& sp = splats[size_t(s)];
        for (int x = a.x0; x <= a.x1; ++x) {
          const Vector2d d(x - sp.mu2d.x(), y - sp.mu2d.y());
          const double m = d.dot(a.q * d);
          const double alpha = std::min(sp.opacity * std::exp(-0.5 * m), kAlphaClamp);
          if (alpha < kAlphaSkip) continue;
          out.contribs[size_t(y) * width + x].push_back({int32_t(s), alpha, 0.0});
        }
      }
      for (int x = 0; x < width; ++x) {
        auto& list = out.contribs[size_t(y) * width + x];
        double t = 1.0, acc_alpha = 0.0, acc_depth = 0.0;
        Vector3d c = Vector3d::Zero();
        for (auto& contrib : list) {
          contrib.trans_before = t;
          const auto& sp = splats[size_t(contrib.splat)];
          c += t * contrib.alpha * sp.color;
          acc_alpha += t * contrib.alpha;
          acc_depth += t * contrib.alpha * sp.depth;
          t *= 1.0 - contrib.alpha;
        }
        out.image.at(x, y) = (c + t * background).cwiseMax(0.0).cwiseMin(1.0);
        out.transmittance[size_t(y) * width + x] = t;
        if (acc_alpha > kDepthAlphaMin) out.depth.at(x, y) = acc_depth / acc_alpha;
      }
    }
  });
  if (!retain) out.contribs.clear();
  return out;
}

// Reverse pass of render for upstream per-pixel color gradients. Gradients for
// mu2d/cov2d/opacity/color of each input splat; splats whose alpha hit the
// clamp contribute zero (locally constant).
inline std::vector<SplatGrad> render_backward(const std::vector<SplatInput>& splats,
                                              const RenderResult& fwd, const Image& d_pixels,
                                              int threads = 1) {
  if (!fwd.retained) throw StateError("render_backward: forward pass was not retained");
  if (d_pixels.width != fwd.image.width || d_pixels.height != fwd.image.height)
    throw InvalidInputError("render_backward: gradient image dimension mismatch");
  const int width = fwd.image.width, height = fwd.image.height;

  std::vector<detail::SplatAux> aux(splats.size());
  for (size_t i = 0; i < splats.size(); ++i) aux[i] = detail::splat_aux(splats[i], width, height);

  const int n_workers = std::max(1, std::min(threads, height));
  std::vector<std::vector<SplatGrad>> buffers(size_t(n_workers),
                                              std::vector<SplatGrad>(splats.size()));

  detail::parallel_rows(height, threads, [&](int row0, int row1, int worker) {
    auto& grads = buffers[size_t(worker)];
    for (int y = row0; y < row1; ++y) {
      for (int x = 0; x < width; ++x) {
        const auto& list = fwd.contribs[size_t(y) * width + x];
        if (list.empty()) continue;
        const Vector3d g = d_pixels.at(x, y);
        if (g.isZero(0.0)) continue;
        const double t_final = fwd.transmittance[size_t(y) * width + x];
        Vector3d suffix = t_final * fwd.background;  // sum of everything behind i
        for (auto it = list.rbegin(); it != list.rend(); ++it) {
          const auto& contrib = *it;
          const auto& sp = splats[size_t(contrib.splat)];
          auto& sg = grads[size_t(contrib.splat)];
          const double ti = contrib.trans_before;
          sg.d_color += g * (contrib.alpha * ti);
          const double d_alpha =
              g.dot(sp.color * ti - suffix / (1.0 - contrib.alpha));
          suffix += contrib.alpha * ti * sp.color;
          if (contrib.alpha >= kAlphaClamp) continue;
          const double gexp = contrib.alpha / sp.opacity;
          sg.d_opacity += gexp * d_alpha;
          const Vector2d d(x - sp.mu2d.x(), y - sp.mu2d.y());
          const Vector2d qd = aux[size_t(contrib.splat)].q * d;
          sg.d_mu2d += d_alpha * contrib.alpha * qd;
          const Matrix2d d_q = d_alpha * contrib.alpha * (-0.5) * (d * d.transpose());
          sg.d_cov2d += -aux[size_t(contrib.splat)].q * d_q * aux[size_t(contrib.splat)].q;
        }
      }
    }
  });

  std::vector<SplatGrad> total(splats.size());
  for (const auto& buf : buffers)
    for (size_t i = 0; i < splats.size(); ++i) {
      total[i].d_mu2d += buf[i].d_mu2d;
      total[i].d_cov2d += buf[i].d_cov2d;
      total[i].d_opacity += buf[i].d_opacity;
      total[i].d_color += buf[i].d_color;
    }
  return total;
}

}  // namespace dsplat
