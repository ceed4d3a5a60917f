#include <cmath>

#include "ops.hpp"
#include "ops_common.hpp"

namespace udm {

using detail::Node;
using detail::op_result;
using detail::require_rank;
using detail::spatial_dims;
using detail::SpatialDims;

Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  SpatialDims d = spatial_dims(x, "channel_linear");
  require_rank(w, 2, "channel_linear");
  const int64_t co = w.extent(0), ci = w.extent(1);
  if (ci != d.c) {
    throw ShapeError("channel_linear: weight " + shape_str(w.shape()) +
                     " does not match input channels " + std::to_string(d.c));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.extent(0) != co)) {
    throw ShapeError("channel_linear: bias " + shape_str(bias.shape()) +
                     " does not match output channels " + std::to_string(co));
  }
  const int64_t pos = d.positions();
  std::vector<double> out(static_cast<size_t>(d.b * co * pos), 0.0);
  const double* px = x.data();
  const double* pw = w.data();
  for (int64_t b = 0; b < d.b; ++b) {
    for (int64_t o = 0; o < co; ++o) {
      double* orow = out.data() + (b * co + o) * pos;
      if (has_bias) {
        const double bv = bias.data()[o];
        for (int64_t p = 0; p < pos; ++p) orow[p] = bv;
      }
      for (int64_t i = 0; i < ci; ++i) {
        const double wv = pw[o * ci + i];
        const double* xrow = px + (b * d.c + i) * pos;
        for (int64_t p = 0; p < pos; ++p) orow[p] += wv * xrow[p];
      }
    }
  }
  Shape os = d.batched ? Shape{d.b, co, d.h, d.w} : Shape{co, d.h, d.w};
  std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
  if (has_bias) parents.push_back(bias.node());
  return op_result(
      std::move(os), std::move(out), std::move(parents),
      [d, co, ci, pos, has_bias](Node& self) {
        Node& px2 = *self.parents[0];
        Node& pw2 = *self.parents[1];
        if (px2.requires_grad) {
          px2.ensure_grad();
          for (int64_t b = 0; b < d.b; ++b) {
            for (int64_t o = 0; o < co; ++o) {
              const double* grow = self.grad.data() + (b * co + o) * pos;
              for (int64_t i = 0; i < ci; ++i) {
                const double wv = pw2.data[o * ci + i];
                double* xg = px2.grad.data() + (b * d.c + i) * pos;
                for (int64_t p = 0; p < pos; ++p) xg[p] += wv * grow[p];
              }
            }
          }
        }
        if (pw2.requires_grad) {
          pw2.ensure_grad();
          for (int64_t b = 0; b < d.b; ++b) {
            for (int64_t o = 0; o < co; ++o) {
              const double* grow = self.grad.data() + (b * co + o) * pos;
              for (int64_t i = 0; i < ci; ++i) {
                const double* xrow = px2.data.data() + (b * d.c + i) * pos;
                double acc = 0.0;
                for (int64_t p = 0; p < pos; ++p) acc += grow[p] * xrow[p];
                pw2.grad[o * ci + i] += acc;
              }
            }
          }
        }
        if (has_bias) {
          Node& pb = *self.parents[2];
          if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t b = 0; b < d.b; ++b) {
              for (int64_t o = 0; o < co; ++o) {
                const double* grow = self.grad.data() + (b * co + o) * pos;
                double acc = 0.0;
                for (int64_t p = 0; p < pos; ++p) acc += grow[p];
                pb.grad[o] += acc;
              }
            }
          }
        }
      },
      "channel_linear");
}

Tensor layer_norm_channel(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          double eps) {
  SpatialDims d = spatial_dims(x, "layer_norm_channel");
  if (gamma.rank() != 1 || gamma.extent(0) != d.c || beta.rank() != 1 ||
      beta.extent(0) != d.c) {
    throw ShapeError("layer_norm_channel: gamma/beta must be [" + std::to_string(d.c) + "]");
  }
  const int64_t pos = d.positions();
  const int64_t c = d.c;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* px = x.data();
  const double* pg = gamma.data();
  const double* pb = beta.data();
  for (int64_t b = 0; b < d.b; ++b) {
    const double* xb = px + b * c * pos;
    double* ob = out.data() + b * c * pos;
    for (int64_t p = 0; p < pos; ++p) {
      double mu = 0.0;
      for (int64_t i = 0; i < c; ++i) mu += xb[i * pos + p];
      mu /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t i = 0; i < c; ++i) {
        const double dv = xb[i * pos + p] - mu;
        var += dv * dv;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int64_t i = 0; i < c; ++i) {
        ob[i * pos + p] = pg[i] * (xb[i * pos + p] - mu) * inv + pb[i];
      }
    }
  }
  return op_result(
      x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [d, pos, c, eps](Node& self) {
        Node& px2 = *self.parents[0];
        Node& pg2 = *self.parents[1];
        Node& pb2 = *self.parents[2];
        const bool need_x = px2.requires_grad;
        const bool need_g = pg2.requires_grad;
        const bool need_b = pb2.requires_grad;
        if (need_x) px2.ensure_grad();
        if (need_g) pg2.ensure_grad();
        if (need_b) pb2.ensure_grad();
        std::vector<double> xhat(static_cast<size_t>(c));
        for (int64_t b = 0; b < d.b; ++b) {
          const double* xb = px2.data.data() + b * c * pos;
          const double* gb = self.grad.data() + b * c * pos;
          for (int64_t p = 0; p < pos; ++p) {
            double mu = 0.0;
            for (int64_t i = 0; i < c; ++i) mu += xb[i * pos + p];
            mu /= static_cast<double>(c);
            double var = 0.0;
            for (int64_t i = 0; i < c; ++i) {
              const double dv = xb[i * pos + p] - mu;
              var += dv * dv;
            }
            var /= static_cast<double>(c);
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int64_t i = 0; i < c; ++i) xhat[i] = (xb[i * pos + p] - mu) * inv;
            if (need_g || need_b) {
              for (int64_t i = 0; i < c; ++i) {
                const double g = gb[i * pos + p];
                if (need_g) pg2.grad[i] += g * xhat[i];
                if (need_b) pb2.grad[i] += g;
              }
            }
            if (need_x) {
              double m1 = 0.0, m2 = 0.0;
              for (int64_t i = 0; i < c; ++i) {
                const double gh = gb[i * pos + p] * pg2.data[i];
                m1 += gh;
                m2 += gh * xhat[i];
              }
              m1 /= static_cast<double>(c);
              m2 /= static_cast<double>(c);
              for (int64_t i = 0; i < c; ++i) {
                const double gh = gb[i * pos + p] * pg2.data[i];
                px2.grad[i * pos + p + b * c * pos] += inv * (gh - m1 - xhat[i] * m2);
              }
            }
          }
        }
      },
      "layer_norm_channel");
}

Tensor depthwise_conv3x3(const Tensor& x, const Tensor& w) {
  SpatialDims d = spatial_dims(x, "depthwise_conv3x3");
  if (w.rank() != 3 || w.extent(0) != d.c || w.extent(1) != 3 || w.extent(2) != 3) {
    throw ShapeError("depthwise_conv3x3: weight must be [" + std::to_string(d.c) +
                     ",3,3], got " + shape_str(w.shape()));
  }
  const int64_t h = d.h, wd = d.w, pos = h * wd;
  std::vector<double> out(static_cast<size_t>(x.numel()), 0.0);
  const double* px = x.data();
  const double* pw = w.data();
  for (int64_t b = 0; b < d.b; ++b) {
    for (int64_t c = 0; c < d.c; ++c) {
      const double* xc = px + (b * d.c + c) * pos;
      double* oc = out.data() + (b * d.c + c) * pos;
      const double* wc = pw + c * 9;
      for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < wd; ++j) {
          double acc = 0.0;
          for (int64_t di = -1; di <= 1; ++di) {
            const int64_t si = i + di;
            if (si < 0 || si >= h) continue;
            for (int64_t dj = -1; dj <= 1; ++dj) {
              const int64_t sj = j + dj;
              if (sj < 0 || sj >= wd) continue;
              acc += wc[(di + 1) * 3 + (dj + 1)] * xc[si * wd + sj];
            }
          }
          oc[i * wd + j] = acc;
        }
      }
    }
  }
  return op_result(
      x.shape(), std::move(out), {x.node(), w.node()},
      [d, h, wd, pos](Node& self) {
        Node& px2 = *self.parents[0];
        Node& pw2 = *self.parents[1];
        const bool need_x = px2.requires_grad;
        const bool need_w = pw2.requires_grad;
        if (need_x) px2.ensure_grad();
        if (need_w) pw2.ensure_grad();
        for (int64_t b = 0; b < d.b; ++b) {
          for (int64_t c = 0; c < d.c; ++c) {
            const double* xc = px2.data.data() + (b * d.c + c) * pos;
            const double* gc = self.grad.data() + (b * d.c + c) * pos;
            double* xg = need_x ? px2.grad.data() + (b * d.c + c) * pos : nullptr;
            const double* wc = pw2.data.data() + c * 9;
            double* wg = need_w ? pw2.grad.data() + c * 9 : nullptr;
            for (int64_t i = 0; i < h; ++i) {
              for (int64_t j = 0; j < wd; ++j) {
                const double g = gc[i * wd + j];
                if (g == 0.0) continue;
                for (int64_t di = -1; di <= 1; ++di) {
                  const int64_t si = i + di;
                  if (si < 0 || si >= h) continue;
                  for (int64_t dj = -1; dj <= 1; ++dj) {
                    const int64_t sj = j + dj;
                    if (sj < 0 || sj >= wd) continue;
                    const int64_t wi = (di + 1) * 3 + (dj + 1);
                    if (need_x) xg[si * wd + sj] += wc[wi] * g;
                    if (need_w) wg[wi] += xc[si * wd + sj] * g;
                  }
                }
              }
            }
          }
        }
      },
      "depthwise_conv3x3");
}

Tensor strided_conv(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride) {
  require_rank(x, 4, "strided_conv");
  require_rank(w, 4, "strided_conv");
  const int64_t b = x.extent(0), ci = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int64_t co = w.extent(0), k = w.extent(2);
  if (w.extent(1) != ci || w.extent(3) != k) {
    throw ShapeError("strided_conv: weight " + shape_str(w.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  if (k != stride) {
    throw ShapeError("strided_conv: kernel " + std::to_string(k) + " must equal stride " +
                     std::to_string(stride));
  }
  if (h % k != 0 || wd % k != 0) {
    throw ShapeError("strided_conv: extents " + shape_str(x.shape()) +
                     " not divisible by stride " + std::to_string(k));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.extent(0) != co)) {
    throw ShapeError("strided_conv: bias must be [" + std::to_string(co) + "]");
  }
  const int64_t oh = h / k, ow = wd / k;
  std::vector<double> out(static_cast<size_t>(b * co * oh * ow), 0.0);
  const double* px = x.data();
  const double* pw = w.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t o = 0; o < co; ++o) {
      double* oc = out.data() + (bi * co + o) * oh * ow;
      if (has_bias) {
        const double bv = bias.data()[o];
        for (int64_t p = 0; p < oh * ow; ++p) oc[p] = bv;
      }
      for (int64_t i = 0; i < ci; ++i) {
        const double* xc = px + (bi * ci + i) * h * wd;
        const double* wc = pw + (o * ci + i) * k * k;
        for (int64_t oi = 0; oi < oh; ++oi) {
          for (int64_t oj = 0; oj < ow; ++oj) {
            double acc = 0.0;
            for (int64_t ki = 0; ki < k; ++ki) {
              const double* xrow = xc + (oi * k + ki) * wd + oj * k;
              const double* wrow = wc + ki * k;
              for (int64_t kj = 0; kj < k; ++kj) acc += wrow[kj] * xrow[kj];
            }
            oc[oi * ow + oj] += acc;
          }
        }
      }
    }
  }
  std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
  if (has_bias) parents.push_back(bias.node());
  return op_result(
      {b, co, oh, ow}, std::move(out), std::move(parents),
      [b, ci, co, h, wd, k, oh, ow, has_bias](Node& self) {
        Node& px2 = *self.parents[0];
        Node& pw2 = *self.parents[1];
        const bool need_x = px2.requires_grad;
        const bool need_w = pw2.requires_grad;
        if (need_x) px2.ensure_grad();
        if (need_w) pw2.ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi) {
          for (int64_t o = 0; o < co; ++o) {
            const double* gc = self.grad.data() + (bi * co + o) * oh * ow;
            for (int64_t i = 0; i < ci; ++i) {
              const double* xc = px2.data.data() + (bi * ci + i) * h * wd;
              double* xgc = need_x ? px2.grad.data() + (bi * ci + i) * h * wd : nullptr;
              const double* wc = pw2.data.data() + (o * ci + i) * k * k;
              double* wgc = need_w ? pw2.grad.data() + (o * ci + i) * k * k : nullptr;
              for (int64_t oi = 0; oi < oh; ++oi) {
                for (int64_t oj = 0; oj < ow; ++oj) {
                  const double g = gc[oi * ow + oj];
                  if (g == 0.0) continue;
                  for (int64_t ki = 0; ki < k; ++ki) {
                    const int64_t row = (oi * k + ki) * wd + oj * k;
                    for (int64_t kj = 0; kj < k; ++kj) {
                      if (need_x) xgc[row + kj] += wc[ki * k + kj] * g;
                      if (need_w) wgc[ki * k + kj] += xc[row + kj] * g;
                    }
                  }
                }
              }
            }
            if (has_bias) {
              Node& pbias = *self.parents[2];
              if (pbias.requires_grad) {
                pbias.ensure_grad();
                double acc = 0.0;
                for (int64_t p = 0; p < oh * ow; ++p) acc += gc[p];
                pbias.grad[o] += acc;
              }
            }
          }
        }
      },
      "strided_conv");
}

Tensor upsample_nearest(const Tensor& x, int64_t factor) {
  require_rank(x, 4, "upsample_nearest");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const int64_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const int64_t oh = h * factor, ow = w * factor;
  std::vector<double> out(static_cast<size_t>(b * c * oh * ow));
  const double* px = x.data();
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const double* xc = px + bc * h * w;
    double* oc = out.data() + bc * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      const double* xrow = xc + (i / factor) * w;
      double* orow = oc + i * ow;
      for (int64_t j = 0; j < ow; ++j) orow[j] = xrow[j / factor];
    }
  }
  return op_result(
      {b, c, oh, ow}, std::move(out), {x.node()},
      [b, c, h, w, factor, oh, ow](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t bc = 0; bc < b * c; ++bc) {
          const double* gc = self.grad.data() + bc * oh * ow;
          double* xg = p.grad.data() + bc * h * w;
          for (int64_t i = 0; i < oh; ++i) {
            const double* grow = gc + i * ow;
            double* xrow = xg + (i / factor) * w;
            for (int64_t j = 0; j < ow; ++j) xrow[j / factor] += grow[j];
          }
        }
      },
      "upsample_nearest");
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2) ||
      a.extent(3) != b.extent(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const int64_t bn = a.extent(0), ca = a.extent(1), cb = b.extent(1);
  const int64_t pos = a.extent(2) * a.extent(3);
  std::vector<double> out(static_cast<size_t>(bn * (ca + cb) * pos));
  for (int64_t bi = 0; bi < bn; ++bi) {
    std::copy_n(a.data() + bi * ca * pos, ca * pos, out.data() + bi * (ca + cb) * pos);
    std::copy_n(b.data() + bi * cb * pos, cb * pos,
                out.data() + bi * (ca + cb) * pos + ca * pos);
  }
  return op_result(
      {bn, ca + cb, a.extent(2), a.extent(3)}, std::move(out), {a.node(), b.node()},
      [bn, ca, cb, pos](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (int64_t bi = 0; bi < bn; ++bi) {
          const double* g = self.grad.data() + bi * (ca + cb) * pos;
          if (pa.requires_grad) {
            pa.ensure_grad();
            double* ag = pa.grad.data() + bi * ca * pos;
            for (int64_t i = 0; i < ca * pos; ++i) ag[i] += g[i];
          }
          if (pb.requires_grad) {
            pb.ensure_grad();
            double* bg = pb.grad.data() + bi * cb * pos;
            for (int64_t i = 0; i < cb * pos; ++i) bg[i] += g[ca * pos + i];
          }
        }
      },
      "concat_channels");
}

namespace {

// Shared body for softmax/log_softmax over axis 1 of [B,K,H,W].
Tensor softmax_impl(const Tensor& x, bool log_form) {
  detail::require_rank(x, 4, log_form ? "log_softmax_channel" : "softmax_channel");
  const int64_t b = x.extent(0), k = x.extent(1), pos = x.extent(2) * x.extent(3);
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* px = x.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    const double* xb = px + bi * k * pos;
    double* ob = out.data() + bi * k * pos;
    for (int64_t p = 0; p < pos; ++p) {
      double mx = xb[p];
      for (int64_t i = 1; i < k; ++i) mx = std::max(mx, xb[i * pos + p]);
      double z = 0.0;
      for (int64_t i = 0; i < k; ++i) z += std::exp(xb[i * pos + p] - mx);
      if (log_form) {
        const double lz = std::log(z) + mx;
        for (int64_t i = 0; i < k; ++i) ob[i * pos + p] = xb[i * pos + p] - lz;
      } else {
        for (int64_t i = 0; i < k; ++i) ob[i * pos + p] = std::exp(xb[i * pos + p] - mx) / z;
      }
    }
  }
  return op_result(
      x.shape(), std::move(out), {x.node()},
      [b, k, pos, log_form](Node& self) {
        Node& p2 = *self.parents[0];
        if (!p2.requires_grad) return;
        p2.ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi) {
          const double* yb = self.data.data() + bi * k * pos;
          const double* gb = self.grad.data() + bi * k * pos;
          double* xg = p2.grad.data() + bi * k * pos;
          for (int64_t p = 0; p < pos; ++p) {
            double dot = 0.0;
            for (int64_t i = 0; i < k; ++i) {
              const double yi = yb[i * pos + p];
              dot += log_form ? gb[i * pos + p] : gb[i * pos + p] * yi;
            }
            for (int64_t i = 0; i < k; ++i) {
              const double yi = yb[i * pos + p];
              if (log_form) {
                xg[i * pos + p] += gb[i * pos + p] - std::exp(yi) * dot;
              } else {
                xg[i * pos + p] += yi * (gb[i * pos + p] - dot);
              }
            }
          }
        }
      },
      log_form ? "log_softmax_channel" : "softmax_channel");
}

}  // namespace

Tensor softmax_channel(const Tensor& x) { return softmax_impl(x, false); }

Tensor log_softmax_channel(const Tensor& x) { return softmax_impl(x, true); }

}  // namespace udm
