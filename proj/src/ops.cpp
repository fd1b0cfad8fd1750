#include "attnmask/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace attnmask::ops {
namespace {

Graph& graph_of(Var v) {
  if (v.graph == nullptr) throw std::logic_error("unbound Var");
  return *v.graph;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw std::domain_error(std::string(what) + ": non-finite input");
  }
}

// Output index range [lo, hi) such that out * stride + offset lies in [0, n).
std::pair<int, int> valid_range(int out_extent, int n, int stride, int offset) {
  int lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  int hi = 0;
  if (n - 1 - offset >= 0) hi = (n - 1 - offset) / stride + 1;
  hi = std::min(hi, out_extent);
  return {lo, std::max(lo, hi)};
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (e + 1.0);
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return graph_of(a).record(
      std::move(out), {a, b},
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        for (Tensor* slot : gin) {
          if (!slot) continue;
          for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
        }
      });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return graph_of(a).record(
      std::move(out), {a, b},
      [&av, &bv](const Tensor&, const Tensor& g,
                 std::span<Tensor* const> gin) {
        if (gin[0]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * bv[i];
        }
        if (gin[1]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * av[i];
        }
      });
}

Var scale(Var x, double factor) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return graph_of(x).record(
      std::move(out), {x},
      [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * factor;
      });
}

Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: no inputs");
  const Tensor& first = xs[0].value();
  Tensor out(first.shape(), 0.0);
  for (const Var& x : xs) {
    require_same_shape(first, x.value(), "add_n");
    const Tensor& v = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return graph_of(xs[0]).record(
      std::move(out), std::vector<Var>(xs.begin(), xs.end()),
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        for (Tensor* slot : gin) {
          if (!slot) continue;
          for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
        }
      });
}

Var scale_channels(Var x, Var weights) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  require_rank(xv, 3, "scale_channels");
  require_shape(wv, {xv.channels(), 1, 1}, "scale_channels weights");
  const int c_n = xv.channels();
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  Tensor out(xv.shape());
  for (int c = 0; c < c_n; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = xv[c * plane + i] * wv[c];
    }
  }
  return graph_of(x).record(
      std::move(out), {x, weights},
      [&xv, &wv, c_n, plane](const Tensor&, const Tensor& g,
                             std::span<Tensor* const> gin) {
        for (int c = 0; c < c_n; ++c) {
          const std::span<const double> gp = g.data().subspan(c * plane, plane);
          if (gin[0]) {
            for (std::size_t i = 0; i < plane; ++i) {
              (*gin[0])[c * plane + i] += gp[i] * wv[c];
            }
          }
          if (gin[1]) {
            std::vector<double> prod(plane);
            for (std::size_t i = 0; i < plane; ++i) {
              prod[i] = gp[i] * xv[c * plane + i];
            }
            (*gin[1])[c] += pairwise_sum(prod);
          }
        }
      });
}

Var scale_spatial(Var x, Var weights) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  require_rank(xv, 3, "scale_spatial");
  require_shape(wv, {1, xv.height(), xv.width()}, "scale_spatial weights");
  const int c_n = xv.channels();
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  Tensor out(xv.shape());
  for (int c = 0; c < c_n; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = xv[c * plane + i] * wv[i];
    }
  }
  return graph_of(x).record(
      std::move(out), {x, weights},
      [&xv, &wv, c_n, plane](const Tensor&, const Tensor& g,
                             std::span<Tensor* const> gin) {
        if (gin[0]) {
          for (int c = 0; c < c_n; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
              (*gin[0])[c * plane + i] += g[c * plane + i] * wv[i];
            }
          }
        }
        if (gin[1]) {
          std::vector<double> prod(static_cast<std::size_t>(c_n));
          for (std::size_t i = 0; i < plane; ++i) {
            for (int c = 0; c < c_n; ++c) {
              prod[c] = g[c * plane + i] * xv[c * plane + i];
            }
            (*gin[1])[i] += pairwise_sum(prod);
          }
        }
      });
}

Var sigmoid(Var x) {
  const Tensor& xv = x.value();
  require_finite(xv, "sigmoid");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(xv[i]);
  return graph_of(x).record(
      std::move(out), {x},
      [](const Tensor& y, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gin[0])[i] += g[i] * y[i] * (1.0 - y[i]);
        }
      });
}

Var relu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return graph_of(x).record(
      std::move(out), {x},
      [&xv](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (xv[i] > 0.0) (*gin[0])[i] += g[i];
        }
      });
}

Var conv2d(Var x, Var weights, std::optional<Var> bias, int stride,
           int padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  require_rank(xv, 3, "conv2d input");
  require_rank(wv, 4, "conv2d weights");
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv2d: stride must be >= 1, padding >= 0");
  }
  const int c_in = xv.channels(), h = xv.height(), w = xv.width();
  const int c_out = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != c_in) {
    throw std::invalid_argument("conv2d: weights expect " +
                                std::to_string(wv.dim(1)) +
                                " input channels, input has " +
                                std::to_string(c_in));
  }
  if (wv.dim(3) != k) throw std::invalid_argument("conv2d: non-square kernel");
  if (bias) require_shape(bias->value(), {c_out}, "conv2d bias");
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (w + 2 * padding - k) / stride + 1;
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }

  Tensor out({c_out, oh, ow}, 0.0);
  for (int oc = 0; oc < c_out; ++oc) {
    double* op = &out.data()[static_cast<std::size_t>(oc) * oh * ow];
    if (bias) std::fill(op, op + oh * ow, bias->value()[oc]);
    for (int ic = 0; ic < c_in; ++ic) {
      const double* ip = &xv.data()[static_cast<std::size_t>(ic) * h * w];
      for (int ky = 0; ky < k; ++ky) {
        const auto [oy0, oy1] = valid_range(oh, h, stride, ky - padding);
        for (int kx = 0; kx < k; ++kx) {
          const double wt = wv[((static_cast<std::size_t>(oc) * c_in + ic) * k + ky) * k + kx];
          if (wt == 0.0) continue;
          const auto [ox0, ox1] = valid_range(ow, w, stride, kx - padding);
          for (int oy = oy0; oy < oy1; ++oy) {
            const double* row = ip + static_cast<std::size_t>(oy * stride + ky - padding) * w + (kx - padding);
            double* orow = op + static_cast<std::size_t>(oy) * ow;
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wt * row[ox * stride];
          }
        }
      }
    }
  }

  std::vector<Var> inputs{x, weights};
  if (bias) inputs.push_back(*bias);
  return graph_of(x).record(
      std::move(out), std::move(inputs),
      [&xv, &wv, c_in, c_out, h, w, k, oh, ow, stride, padding](
          const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        Tensor* gx = gin[0];
        Tensor* gw = gin[1];
        Tensor* gb = gin.size() > 2 ? gin[2] : nullptr;
        for (int oc = 0; oc < c_out; ++oc) {
          const double* gp = &g.data()[static_cast<std::size_t>(oc) * oh * ow];
          if (gb) {
            (*gb)[oc] += pairwise_sum(std::span<const double>(gp, static_cast<std::size_t>(oh) * ow));
          }
          for (int ic = 0; ic < c_in; ++ic) {
            const double* ip = &xv.data()[static_cast<std::size_t>(ic) * h * w];
            double* gip = gx ? &gx->data()[static_cast<std::size_t>(ic) * h * w] : nullptr;
            for (int ky = 0; ky < k; ++ky) {
              const auto [oy0, oy1] = valid_range(oh, h, stride, ky - padding);
              for (int kx = 0; kx < k; ++kx) {
                const std::size_t widx = ((static_cast<std::size_t>(oc) * c_in + ic) * k + ky) * k + kx;
                const double wt = wv[widx];
                const auto [ox0, ox1] = valid_range(ow, w, stride, kx - padding);
                double acc = 0.0;
                for (int oy = oy0; oy < oy1; ++oy) {
                  const std::size_t in_off = static_cast<std::size_t>(oy * stride + ky - padding) * w + (kx - padding);
                  const double* grow = gp + static_cast<std::size_t>(oy) * ow;
                  const double* row = ip + in_off;
                  if (gw) {
                    for (int ox = ox0; ox < ox1; ++ox) acc += grow[ox] * row[ox * stride];
                  }
                  if (gip && wt != 0.0) {
                    double* girow = gip + in_off;
                    for (int ox = ox0; ox < ox1; ++ox) girow[ox * stride] += wt * grow[ox];
                  }
                }
                if (gw) (*gw)[widx] += acc;
              }
            }
          }
        }
      });
}

Var global_pool(Var x, PoolAxis axis, PoolMode mode) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "global_pool");
  const int c_n = xv.channels();
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();

  if (axis == PoolAxis::kSpatial) {
    Tensor out({c_n, 1, 1});
    std::vector<std::size_t> argmax(static_cast<std::size_t>(c_n), 0);
    for (int c = 0; c < c_n; ++c) {
      const std::span<const double> p = xv.data().subspan(c * plane, plane);
      if (mode == PoolMode::kAvg) {
        out[c] = pairwise_sum(p) / static_cast<double>(plane);
      } else {
        std::size_t best = 0;
        for (std::size_t i = 1; i < plane; ++i) {
          if (p[i] > p[best]) best = i;
        }
        argmax[c] = best;
        out[c] = p[best];
      }
    }
    return graph_of(x).record(
        std::move(out), {x},
        [mode, c_n, plane, argmax = std::move(argmax)](
            const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
          if (!gin[0]) return;
          for (int c = 0; c < c_n; ++c) {
            if (mode == PoolMode::kAvg) {
              const double share = g[c] / static_cast<double>(plane);
              for (std::size_t i = 0; i < plane; ++i) (*gin[0])[c * plane + i] += share;
            } else {
              (*gin[0])[c * plane + argmax[c]] += g[c];
            }
          }
        });
  }

  Tensor out({1, xv.height(), xv.width()});
  std::vector<int> argmax(plane, 0);
  std::vector<double> column(static_cast<std::size_t>(c_n));
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < c_n; ++c) column[c] = xv[c * plane + i];
    if (mode == PoolMode::kAvg) {
      out[i] = pairwise_sum(column) / static_cast<double>(c_n);
    } else {
      int best = 0;
      for (int c = 1; c < c_n; ++c) {
        if (column[c] > column[best]) best = c;
      }
      argmax[i] = best;
      out[i] = column[best];
    }
  }
  return graph_of(x).record(
      std::move(out), {x},
      [mode, c_n, plane, argmax = std::move(argmax)](
          const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < plane; ++i) {
          if (mode == PoolMode::kAvg) {
            const double share = g[i] / static_cast<double>(c_n);
            for (int c = 0; c < c_n; ++c) (*gin[0])[c * plane + i] += share;
          } else {
            (*gin[0])[argmax[i] * plane + i] += g[i];
          }
        }
      });
}

Var upsample_nearest(Var x, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor < 1");
  const Tensor& xv = x.value();
  require_rank(xv, 3, "upsample_nearest");
  const int c_n = xv.channels(), h = xv.height(), w = xv.width();
  Tensor out({c_n, h * factor, w * factor});
  for (int c = 0; c < c_n; ++c) {
    for (int y = 0; y < h * factor; ++y) {
      for (int xx = 0; xx < w * factor; ++xx) {
        out.at(c, y, xx) = xv.at(c, y / factor, xx / factor);
      }
    }
  }
  return graph_of(x).record(
      std::move(out), {x},
      [c_n, h, w, factor](const Tensor&, const Tensor& g,
                          std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (int c = 0; c < c_n; ++c) {
          for (int y = 0; y < h * factor; ++y) {
            for (int xx = 0; xx < w * factor; ++xx) {
              gin[0]->at(c, y / factor, xx / factor) += g.at(c, y, xx);
            }
          }
        }
      });
}

Var max_pool2d(Var x, int kernel, int stride, int padding) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "max_pool2d");
  const int c_n = xv.channels(), h = xv.height(), w = xv.width();
  const int oh = (h + 2 * padding - kernel) / stride + 1;
  const int ow = (w + 2 * padding - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw std::invalid_argument("max_pool2d: empty output");
  Tensor out({c_n, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (int c = 0; c < c_n; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride + kx - padding;
            if (ix < 0 || ix >= w) continue;
            const double v = xv.at(c, iy, ix);
            if (!found || v > best) {
              best = v;
              best_idx = (static_cast<std::size_t>(c) * h + iy) * w + ix;
              found = true;
            }
          }
        }
        if (!found) throw std::invalid_argument("max_pool2d: window outside input");
        const std::size_t o = (static_cast<std::size_t>(c) * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  return graph_of(x).record(
      std::move(out), {x},
      [argmax = std::move(argmax)](const Tensor&, const Tensor& g,
                                   std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t o = 0; o < g.size(); ++o) (*gin[0])[argmax[o]] += g[o];
      });
}

Var concat_channels(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Tensor& first = xs[0].value();
  require_rank(first, 3, "concat_channels");
  int total = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    require_rank(t, 3, "concat_channels");
    if (t.height() != first.height() || t.width() != first.width()) {
      throw std::invalid_argument("concat_channels: spatial extents differ");
    }
    total += t.channels();
  }
  Tensor out({total, first.height(), first.width()});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& v : xs) {
    offsets.push_back(off);
    const Tensor& t = v.value();
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += t.size();
  }
  return graph_of(xs[0]).record(
      std::move(out), std::vector<Var>(xs.begin(), xs.end()),
      [offsets = std::move(offsets)](const Tensor&, const Tensor& g,
                                     std::span<Tensor* const> gin) {
        for (std::size_t k = 0; k < gin.size(); ++k) {
          if (!gin[k]) continue;
          for (std::size_t i = 0; i < gin[k]->size(); ++i) {
            (*gin[k])[i] += g[offsets[k] + i];
          }
        }
      });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  return graph_of(x).record(
      Tensor::scalar(pairwise_sum(xv.data())), {x},
      [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gin[0]->size(); ++i) (*gin[0])[i] += g[0];
      });
}

Var linear(Var x, Var weights, std::optional<Var> bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  require_rank(wv, 2, "linear weights");
  const int n_out = wv.dim(0), n_in = wv.dim(1);
  if (static_cast<std::size_t>(n_in) != xv.size()) {
    throw std::invalid_argument("linear: weights expect " + std::to_string(n_in) +
                                " inputs, got " + shape_string(xv.shape()));
  }
  if (bias) require_shape(bias->value(), {n_out}, "linear bias");
  Tensor out({n_out, 1, 1});
  for (int o = 0; o < n_out; ++o) {
    const double* row = &wv.data()[static_cast<std::size_t>(o) * n_in];
    double acc = bias ? bias->value()[o] : 0.0;
    for (int i = 0; i < n_in; ++i) acc += row[i] * xv[i];
    out[o] = acc;
  }
  std::vector<Var> inputs{x, weights};
  if (bias) inputs.push_back(*bias);
  return graph_of(x).record(
      std::move(out), std::move(inputs),
      [&xv, &wv, n_out, n_in](const Tensor&, const Tensor& g,
                              std::span<Tensor* const> gin) {
        for (int o = 0; o < n_out; ++o) {
          const double go = g[o];
          if (gin[0]) {
            const double* row = &wv.data()[static_cast<std::size_t>(o) * n_in];
            for (int i = 0; i < n_in; ++i) (*gin[0])[i] += go * row[i];
          }
          if (gin[1]) {
            double* grow = &gin[1]->data()[static_cast<std::size_t>(o) * n_in];
            for (int i = 0; i < n_in; ++i) grow[i] += go * xv[i];
          }
          if (gin.size() > 2 && gin[2]) (*gin[2])[o] += go;
        }
      });
}

Var channel_conv1d(Var x, Var weights) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  require_rank(xv, 3, "channel_conv1d");
  if (xv.height() != 1 || xv.width() != 1) {
    throw std::invalid_argument("channel_conv1d: expected C x 1 x 1 input");
  }
  require_rank(wv, 1, "channel_conv1d weights");
  const int k = wv.dim(0);
  if (k % 2 == 0) throw std::invalid_argument("channel_conv1d: kernel must be odd");
  const int c_n = xv.channels();
  const int half = (k - 1) / 2;
  Tensor out({c_n, 1, 1});
  for (int c = 0; c < c_n; ++c) {
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
      const int src = c + j - half;
      if (src >= 0 && src < c_n) acc += wv[j] * xv[src];
    }
    out[c] = acc;
  }
  return graph_of(x).record(
      std::move(out), {x, weights},
      [&xv, &wv, c_n, k, half](const Tensor&, const Tensor& g,
                               std::span<Tensor* const> gin) {
        for (int c = 0; c < c_n; ++c) {
          for (int j = 0; j < k; ++j) {
            const int src = c + j - half;
            if (src < 0 || src >= c_n) continue;
            if (gin[0]) (*gin[0])[src] += g[c] * wv[j];
            if (gin[1]) (*gin[1])[j] += g[c] * xv[src];
          }
        }
      });
}

Var gather(Var x, std::span<const std::size_t> indices) {
  const Tensor& xv = x.value();
  if (indices.empty()) throw std::invalid_argument("gather: no indices");
  Tensor out({static_cast<int>(indices.size())});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size()) throw std::out_of_range("gather: index out of range");
    out[i] = xv[indices[i]];
  }
  return graph_of(x).record(
      std::move(out), {x},
      [idx = std::vector<std::size_t>(indices.begin(), indices.end())](
          const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < idx.size(); ++i) (*gin[0])[idx[i]] += g[i];
      });
}

Var select_channel(Var x, int channel) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "select_channel");
  if (channel < 0 || channel >= xv.channels()) {
    throw std::out_of_range("select_channel: channel out of range");
  }
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  Tensor out({1, xv.height(), xv.width()});
  std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(channel * plane), plane, out.data().begin());
  return graph_of(x).record(
      std::move(out), {x},
      [channel, plane](const Tensor&, const Tensor& g,
                       std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < plane; ++i) (*gin[0])[channel * plane + i] += g[i];
      });
}

}  // namespace attnmask::ops
