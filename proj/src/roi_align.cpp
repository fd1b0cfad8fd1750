#include "attnmask/roi_align.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace attnmask {

int assign_level(const Box& box, int k0, double canonical, int min_level, int max_level) {
  const double size = std::sqrt(box.area());
  const int level = static_cast<int>(std::floor(k0 + std::log2(size / canonical)));
  return std::clamp(level, min_level, max_level);
}

BilinearTap bilinear_tap(int height, int width, double x, double y) {
  BilinearTap tap;
  // Index space of cell centers.
  double ax = x - 0.5;
  double ay = y - 0.5;
  if (ax < -1.0 || ax > width || ay < -1.0 || ay > height) return tap;
  ax = std::max(ax, 0.0);
  ay = std::max(ay, 0.0);
  int x0 = static_cast<int>(ax);
  int y0 = static_cast<int>(ay);
  int x1 = x0 + 1;
  int y1 = y0 + 1;
  if (x0 >= width - 1) {
    x0 = x1 = width - 1;
    ax = x0;
  }
  if (y0 >= height - 1) {
    y0 = y1 = height - 1;
    ay = y0;
  }
  const double lx = ax - x0, ly = ay - y0;
  const double hx = 1.0 - lx, hy = 1.0 - ly;
  const auto w = static_cast<std::size_t>(width);
  tap.offset = {y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1};
  tap.weight = {hy * hx, hy * lx, ly * hx, ly * lx};
  tap.valid = true;
  return tap;
}

double bilinear_sample(const Tensor& feature, int channel, double x, double y) {
  const BilinearTap tap = bilinear_tap(feature.height(), feature.width(), x, y);
  if (!tap.valid) return 0.0;
  const std::size_t plane = static_cast<std::size_t>(feature.height()) * feature.width();
  const double* p = &feature.data()[channel * plane];
  double v = 0.0;
  for (int k = 0; k < 4; ++k) v += tap.weight[k] * p[tap.offset[k]];
  return v;
}

Var roi_align(Var feature, int stride, const Box& roi, const RoiAlignConfig& cfg) {
  const Tensor& fv = feature.value();
  require_rank(fv, 3, "roi_align feature");
  if (cfg.output_size < 1) throw std::invalid_argument("roi_align: output size < 1");
  if (stride < 1) throw std::invalid_argument("roi_align: stride < 1");
  if (!(roi.area() > 0.0)) throw std::invalid_argument("roi_align: zero-area ROI");

  const int c_n = fv.channels(), h = fv.height(), w = fv.width();
  const int p = cfg.output_size;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double x0 = roi.x1() / stride, y0 = roi.y1() / stride;
  const double bin_w = roi.w / stride / p, bin_h = roi.h / stride / p;
  constexpr std::array<double, 2> kQuarter{0.25, 0.75};

  // Taps per bin, shared by all channels.
  std::vector<std::array<BilinearTap, 4>> taps(static_cast<std::size_t>(p) * p);
  for (int by = 0; by < p; ++by) {
    for (int bx = 0; bx < p; ++bx) {
      auto& t = taps[static_cast<std::size_t>(by) * p + bx];
      int s = 0;
      for (double qy : kQuarter) {
        for (double qx : kQuarter) {
          t[s++] = bilinear_tap(h, w, x0 + (bx + qx) * bin_w, y0 + (by + qy) * bin_h);
        }
      }
    }
  }

  Tensor out({c_n, p, p});
  std::vector<unsigned char> winner(out.size(), 0);
  for (int c = 0; c < c_n; ++c) {
    const double* fp = &fv.data()[c * plane];
    for (std::size_t b = 0; b < taps.size(); ++b) {
      std::array<double, 4> samples{};
      for (int s = 0; s < 4; ++s) {
        const BilinearTap& tap = taps[b][s];
        if (!tap.valid) continue;
        for (int k = 0; k < 4; ++k) samples[s] += tap.weight[k] * fp[tap.offset[k]];
      }
      const std::size_t o = c * taps.size() + b;
      if (cfg.aggregation == RoiAggregation::kMax) {
        int best = 0;
        for (int s = 1; s < 4; ++s) {
          if (samples[s] > samples[best]) best = s;
        }
        winner[o] = static_cast<unsigned char>(best);
        out[o] = samples[best];
      } else {
        out[o] = 0.25 * (samples[0] + samples[1] + samples[2] + samples[3]);
      }
    }
  }

  const RoiAggregation agg = cfg.aggregation;
  return feature.graph->record(
      std::move(out), {feature},
      [taps = std::move(taps), winner = std::move(winner), agg, c_n, plane](
          const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        double* gf = gin[0]->data().data();
        for (int c = 0; c < c_n; ++c) {
          double* gp = gf + c * plane;
          for (std::size_t b = 0; b < taps.size(); ++b) {
            const std::size_t o = c * taps.size() + b;
            if (agg == RoiAggregation::kMax) {
              const BilinearTap& tap = taps[b][winner[o]];
              if (!tap.valid) continue;
              for (int k = 0; k < 4; ++k) gp[tap.offset[k]] += g[o] * tap.weight[k];
            } else {
              for (const BilinearTap& tap : taps[b]) {
                if (!tap.valid) continue;
                for (int k = 0; k < 4; ++k) gp[tap.offset[k]] += 0.25 * g[o] * tap.weight[k];
              }
            }
          }
        }
      });
}

}  // namespace attnmask
