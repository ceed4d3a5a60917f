#include <cmath>

#include "ops.hpp"
#include "ops_common.hpp"

namespace udm {

using detail::Node;
using detail::op_result;
using detail::require_rank;
using detail::require_same_shape;
using detail::spatial_dims;
using detail::SpatialDims;

namespace {

void validate_permutation(const std::vector<int64_t>& perm, int64_t n, const char* op) {
  if (static_cast<int64_t>(perm.size()) != n) {
    throw PermutationError(std::string(op) + ": permutation length " +
                           std::to_string(perm.size()) + " does not match " +
                           std::to_string(n) + " pixels");
  }
  std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
  for (int64_t v : perm) {
    if (v < 0 || v >= n) {
      throw PermutationError(std::string(op) + ": entry " + std::to_string(v) +
                             " outside [0," + std::to_string(n) + ")");
    }
    if (seen[static_cast<size_t>(v)]) {
      throw PermutationError(std::string(op) + ": duplicate entry " + std::to_string(v));
    }
    seen[static_cast<size_t>(v)] = 1;
  }
}

}  // namespace

Tensor permute_gather(const Tensor& x, const std::vector<int64_t>& perm) {
  require_rank(x, 3, "permute_gather");
  const int64_t c = x.extent(0), n = x.extent(1) * x.extent(2);
  validate_permutation(perm, n, "permute_gather");
  std::vector<double> out(static_cast<size_t>(c * n));
  const double* px = x.data();
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* xc = px + ci * n;
    double* oc = out.data() + ci * n;
    for (int64_t k = 0; k < n; ++k) oc[k] = xc[perm[static_cast<size_t>(k)]];
  }
  return op_result(
      {c, n}, std::move(out), {x.node()},
      [perm, c, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* gc = self.grad.data() + ci * n;
          double* xg = p.grad.data() + ci * n;
          for (int64_t k = 0; k < n; ++k) xg[perm[static_cast<size_t>(k)]] += gc[k];
        }
      },
      "permute_gather");
}

Tensor permute_scatter(const Tensor& seq, const std::vector<int64_t>& perm,
                       int64_t h, int64_t w) {
  require_rank(seq, 2, "permute_scatter");
  const int64_t c = seq.extent(0), n = seq.extent(1);
  if (h * w != n) {
    throw ShapeError("permute_scatter: target " + std::to_string(h) + "x" +
                     std::to_string(w) + " does not hold " + std::to_string(n) +
                     " elements");
  }
  validate_permutation(perm, n, "permute_scatter");
  std::vector<double> out(static_cast<size_t>(c * n));
  const double* ps = seq.data();
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* sc = ps + ci * n;
    double* oc = out.data() + ci * n;
    for (int64_t k = 0; k < n; ++k) oc[perm[static_cast<size_t>(k)]] = sc[k];
  }
  return op_result(
      {c, h, w}, std::move(out), {seq.node()},
      [perm, c, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* gc = self.grad.data() + ci * n;
          double* sg = p.grad.data() + ci * n;
          for (int64_t k = 0; k < n; ++k) sg[k] += gc[perm[static_cast<size_t>(k)]];
        }
      },
      "permute_scatter");
}

void discretize(double delta, double a, double b, double* abar, double* bbar) {
  const double e = delta * a;
  const double ea = std::exp(e);
  *abar = ea;
  if (std::abs(e) < kDiscretizeSeriesThreshold) {
    *bbar = delta * (1.0 + 0.5 * e) * b;
  } else {
    *bbar = (ea - 1.0) / a * b;
  }
}

namespace {

// Fills the per-step decay and gate factors for one (channel, state) pair.
// f is the delta gate: bbar = f * b, so bx = f * b * x.
inline void fill_step_factors(const double* delta_row, double a_cn, int64_t len,
                              double* abar, double* f) {
  for (int64_t t = 0; t < len; ++t) {
    const double e = delta_row[t] * a_cn;
    const double ea = std::exp(e);
    abar[t] = ea;
    if (std::abs(e) < kDiscretizeSeriesThreshold) {
      f[t] = delta_row[t] * (1.0 + 0.5 * e);
    } else {
      f[t] = (ea - 1.0) / a_cn;
    }
  }
}

}  // namespace

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a,
                      const Tensor& b, const Tensor& c, const Tensor& d,
                      ScanKernel kernel) {
  require_rank(x, 2, "selective_scan");
  require_same_shape(x, delta, "selective_scan");
  require_rank(a, 2, "selective_scan");
  require_rank(b, 2, "selective_scan");
  require_rank(c, 2, "selective_scan");
  const int64_t ch = x.extent(0), len = x.extent(1);
  const int64_t ns = a.extent(1);
  if (a.extent(0) != ch) {
    throw ShapeError("selective_scan: a " + shape_str(a.shape()) + " does not match " +
                     std::to_string(ch) + " channels");
  }
  if (b.extent(0) != ns || b.extent(1) != len || c.shape() != b.shape()) {
    throw ShapeError("selective_scan: b/c must be [" + std::to_string(ns) + "," +
                     std::to_string(len) + "], got " + shape_str(b.shape()) + " and " +
                     shape_str(c.shape()));
  }
  const bool has_d = d.defined();
  if (has_d && (d.rank() != 1 || d.extent(0) != ch)) {
    throw ShapeError("selective_scan: d must be [" + std::to_string(ch) + "]");
  }

  std::vector<double> out(static_cast<size_t>(ch * len), 0.0);
  {
    std::vector<double> abar(static_cast<size_t>(len));
    std::vector<double> f(static_cast<size_t>(len));
    std::vector<double> bx(static_cast<size_t>(len));
    std::vector<double> hbuf(static_cast<size_t>(len));
    const double* px = x.data();
    const double* pdelta = delta.data();
    const double* pa = a.data();
    const double* pb = b.data();
    const double* pc = c.data();
    for (int64_t ci = 0; ci < ch; ++ci) {
      const double* xr = px + ci * len;
      const double* dr = pdelta + ci * len;
      double* yr = out.data() + ci * len;
      if (has_d) {
        const double dv = d.data()[ci];
        for (int64_t t = 0; t < len; ++t) yr[t] = dv * xr[t];
      }
      for (int64_t n = 0; n < ns; ++n) {
        fill_step_factors(dr, pa[ci * ns + n], len, abar.data(), f.data());
        const double* br = pb + n * len;
        const double* cr = pc + n * len;
        for (int64_t t = 0; t < len; ++t) bx[t] = f[t] * br[t] * xr[t];
        if (kernel == ScanKernel::parallel) {
          scan_parallel(abar.data(), bx.data(), hbuf.data(), len);
        } else {
          scan_sequential(abar.data(), bx.data(), hbuf.data(), len);
        }
        for (int64_t t = 0; t < len; ++t) yr[t] += cr[t] * hbuf[t];
      }
    }
  }
  check_finite(out.data(), out.size(), "selective_scan");

  std::vector<std::shared_ptr<Node>> parents{x.node(), delta.node(), a.node(), b.node(),
                                             c.node()};
  if (has_d) parents.push_back(d.node());
  // Backward recomputes the per-pair factors and states with a sequential
  // sweep instead of saving h for every (channel, state), trading one extra
  // forward pass for O(C*N*L) saved memory. The adjoint of the recurrence
  // runs right to left: ghat_t = c_t*gy_t + abar_{t+1}*ghat_{t+1}.
  return op_result(
      {ch, len}, std::move(out), std::move(parents),
      [ch, len, ns, has_d](Node& self) {
        Node& px2 = *self.parents[0];
        Node& pd2 = *self.parents[1];
        Node& pa2 = *self.parents[2];
        Node& pb2 = *self.parents[3];
        Node& pc2 = *self.parents[4];
        Node* pdd = has_d ? self.parents[5].get() : nullptr;
        const bool need_x = px2.requires_grad;
        const bool need_delta = pd2.requires_grad;
        const bool need_a = pa2.requires_grad;
        const bool need_b = pb2.requires_grad;
        const bool need_c = pc2.requires_grad;
        const bool need_dd = pdd && pdd->requires_grad;
        if (need_x) px2.ensure_grad();
        if (need_delta) pd2.ensure_grad();
        if (need_a) pa2.ensure_grad();
        if (need_b) pb2.ensure_grad();
        if (need_c) pc2.ensure_grad();
        if (need_dd) pdd->ensure_grad();

        std::vector<double> abar(static_cast<size_t>(len));
        std::vector<double> f(static_cast<size_t>(len));
        std::vector<double> bx(static_cast<size_t>(len));
        std::vector<double> hbuf(static_cast<size_t>(len));
        for (int64_t ci = 0; ci < ch; ++ci) {
          const double* xr = px2.data.data() + ci * len;
          const double* dr = pd2.data.data() + ci * len;
          const double* gy = self.grad.data() + ci * len;
          if (pdd) {
            const double dv = pdd->data[ci];
            if (need_dd) {
              double acc = 0.0;
              for (int64_t t = 0; t < len; ++t) acc += gy[t] * xr[t];
              pdd->grad[ci] += acc;
            }
            if (need_x) {
              double* xg = px2.grad.data() + ci * len;
              for (int64_t t = 0; t < len; ++t) xg[t] += dv * gy[t];
            }
          }
          for (int64_t n = 0; n < ns; ++n) {
            const double a_cn = pa2.data[ci * ns + n];
            fill_step_factors(dr, a_cn, len, abar.data(), f.data());
            const double* br = pb2.data.data() + n * len;
            const double* cr = pc2.data.data() + n * len;
            for (int64_t t = 0; t < len; ++t) bx[t] = f[t] * br[t] * xr[t];
            scan_sequential(abar.data(), bx.data(), hbuf.data(), len);

            double ghat = 0.0;
            double ga_acc = 0.0;
            for (int64_t t = len - 1; t >= 0; --t) {
              ghat = cr[t] * gy[t] + (t + 1 < len ? abar[t + 1] * ghat : 0.0);
              if (need_c) pc2.grad[n * len + t] += gy[t] * hbuf[t];
              const double hprev = t > 0 ? hbuf[t - 1] : 0.0;
              const double gabar = ghat * hprev;
              const double gf = ghat * br[t] * xr[t];
              if (need_b) pb2.grad[n * len + t] += ghat * f[t] * xr[t];
              if (need_x) px2.grad[ci * len + t] += ghat * f[t] * br[t];
              if (need_delta || need_a) {
                const double e = dr[t] * a_cn;
                double df_ddelta, df_da;
                if (std::abs(e) < kDiscretizeSeriesThreshold) {
                  df_ddelta = 1.0 + e;
                  df_da = 0.5 * dr[t] * dr[t];
                } else {
                  df_ddelta = abar[t];
                  df_da = (dr[t] * a_cn * abar[t] - (abar[t] - 1.0)) / (a_cn * a_cn);
                }
                if (need_delta) {
                  pd2.grad[ci * len + t] += gabar * a_cn * abar[t] + gf * df_ddelta;
                }
                if (need_a) ga_acc += gabar * dr[t] * abar[t] + gf * df_da;
              }
            }
            if (need_a) pa2.grad[ci * ns + n] += ga_acc;
          }
        }
      },
      "selective_scan");
}

Tensor cosine_sim_channel_mean(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_sim_channel_mean");
  SpatialDims dims = spatial_dims(a, "cosine_sim_channel_mean");
  const int64_t c = dims.c, pos = dims.positions(), bn = dims.b;
  const double* pa = a.data();
  const double* pb = b.data();
  double total = 0.0;
  for (int64_t bi = 0; bi < bn; ++bi) {
    const double* ab = pa + bi * c * pos;
    const double* bb = pb + bi * c * pos;
    for (int64_t p = 0; p < pos; ++p) {
      double s = 0.0, na2 = 0.0, nb2 = 0.0;
      for (int64_t i = 0; i < c; ++i) {
        const double av = ab[i * pos + p];
        const double bv = bb[i * pos + p];
        s += av * bv;
        na2 += av * av;
        nb2 += bv * bv;
      }
      const double den = std::max(std::sqrt(na2) * std::sqrt(nb2), kCosineGuard);
      total += s / den;
    }
  }
  const double count = static_cast<double>(bn * pos);
  return op_result(
      {1}, {total / count}, {a.node(), b.node()},
      [bn, c, pos, count](Node& self) {
        Node& pa2 = *self.parents[0];
        Node& pb2 = *self.parents[1];
        const bool need_a = pa2.requires_grad;
        const bool need_b = pb2.requires_grad;
        if (need_a) pa2.ensure_grad();
        if (need_b) pb2.ensure_grad();
        const double gscale = self.grad[0] / count;
        for (int64_t bi = 0; bi < bn; ++bi) {
          const int64_t base = bi * c * pos;
          for (int64_t p = 0; p < pos; ++p) {
            double s = 0.0, na2 = 0.0, nb2 = 0.0;
            for (int64_t i = 0; i < c; ++i) {
              const double av = pa2.data[base + i * pos + p];
              const double bv = pb2.data[base + i * pos + p];
              s += av * bv;
              na2 += av * av;
              nb2 += bv * bv;
            }
            const double na = std::sqrt(na2);
            const double nb = std::sqrt(nb2);
            const double raw = na * nb;
            if (raw > kCosineGuard) {
              const double den = raw;
              const double cosv = s / den;
              for (int64_t i = 0; i < c; ++i) {
                const double av = pa2.data[base + i * pos + p];
                const double bv = pb2.data[base + i * pos + p];
                if (need_a) pa2.grad[base + i * pos + p] += gscale * (bv / den - cosv * av / na2);
                if (need_b) pb2.grad[base + i * pos + p] += gscale * (av / den - cosv * bv / nb2);
              }
            } else {
              // Clamped denominator is a constant here, so only the inner
              // product contributes gradient.
              for (int64_t i = 0; i < c; ++i) {
                const double av = pa2.data[base + i * pos + p];
                const double bv = pb2.data[base + i * pos + p];
                if (need_a) pa2.grad[base + i * pos + p] += gscale * bv / kCosineGuard;
                if (need_b) pb2.grad[base + i * pos + p] += gscale * av / kCosineGuard;
              }
            }
          }
        }
      },
      "cosine_sim_channel_mean");
}

}  // namespace udm
