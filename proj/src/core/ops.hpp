#pragma once

#include <cstdint>
#include <vector>

#include "scan_kernels.hpp"
#include "tensor.hpp"

namespace udm {

// All ops are pure: they allocate a fresh output and never mutate inputs.
// Unless noted otherwise, every input that requires grad receives one.

// Elementwise; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
// y = s * x with a single-element differentiable s (branch reweighting).
Tensor scale_by(const Tensor& x, const Tensor& s);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
// x * sigmoid(x); rejects non-finite inputs.
Tensor silu(const Tensor& x);

// Dense [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// y[i,j] = x[i,j] + bias[i] for rank-2 x.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// Spatial ops accept [C,H,W] or [B,C,H,W] unless noted; the channel axis is
// axis 0 respectively axis 1.
// 1x1 convolution: w is [Co,Ci], optional bias [Co] (pass undefined to skip).
Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& bias);
// Per-position normalization over the channel axis, population variance.
Tensor layer_norm_channel(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          double eps);
// 3x3 depthwise convolution, zero padding 1, stride 1; w is [C,3,3].
Tensor depthwise_conv3x3(const Tensor& x, const Tensor& w);
// Non-overlapping k x k convolution with stride == k (patchify / downsample).
// Rank-4 only; w is [Co,Ci,k,k], optional bias [Co]. Extents must divide.
Tensor strided_conv(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride);
// Nearest-neighbour upsampling by an integer factor. Rank-4 only.
Tensor upsample_nearest(const Tensor& x, int64_t factor);
// Concatenate along the channel axis. Rank-4 only.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Softmax over the channel axis, numerically stabilized. Rank-4 only.
Tensor softmax_channel(const Tensor& x);
Tensor log_softmax_channel(const Tensor& x);
// [B,C,H,W] -> [C,H,W] slice / list of [C,H,W] -> [B,C,H,W].
Tensor select_batch(const Tensor& x, int64_t index);
Tensor stack_batch(const std::vector<Tensor>& xs);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Reads pixels of [C,H,W] in permutation order: y[c,k] = x[c, perm[k]] over
// row-major flat indices. perm must be a bijection on [0, H*W). The identity
// permutation returns an unchanged (reshaped) copy. Gradient scatters back
// through the same mapping.
Tensor permute_gather(const Tensor& x, const std::vector<int64_t>& perm);
// Inverse of permute_gather: places sequence element k at pixel perm[k].
Tensor permute_scatter(const Tensor& seq, const std::vector<int64_t>& perm,
                       int64_t h, int64_t w);

// Fused selective state-space recurrence over a [C,L] sequence.
//   e      = delta[c,t] * a[c,n]
//   abar   = exp(e)
//   bbar   = delta-scaled input gate, (exp(e)-1)/a[c,n] * b[n,t], with the
//            series fallback delta*(1 + e/2)*b[n,t] when |e| < 1e-6
//   h[n,t] = abar*h[n,t-1] + bbar*x[c,t]
//   y[c,t] = sum_n c[n,t]*h[n,t] (+ d[c]*x[c,t] when d is defined)
// delta is used as given (apply softplus beforehand). a is [C,N]; b and c are
// [N,L]; d is [C] or undefined. Rejects non-finite outputs.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a,
                      const Tensor& b, const Tensor& c, const Tensor& d,
                      ScanKernel kernel);

// Mean over positions (and batch) of the cosine similarity between the
// channel vectors of a and b, with the denominator clamped to 1e-8.
Tensor cosine_sim_channel_mean(const Tensor& a, const Tensor& b);

// Zero-order-hold discretization of one scalar state: abar = exp(delta*a),
// bbar = (exp(delta*a)-1)/a * b, series branch as in selective_scan.
void discretize(double delta, double a, double b, double* abar, double* bbar);

// |delta*a| below this uses the second-order series for bbar.
inline constexpr double kDiscretizeSeriesThreshold = 1e-6;
// Cosine similarity denominator clamp.
inline constexpr double kCosineGuard = 1e-8;

}  // namespace udm
