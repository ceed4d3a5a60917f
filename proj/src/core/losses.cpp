#include "losses.hpp"

#include <cmath>

#include "ops.hpp"
#include "ops_common.hpp"

namespace udm {

using detail::Node;
using detail::op_result;
using detail::require_rank;

namespace {

void check_masks(const Tensor& logits, const std::vector<LabelMask>& masks) {
  require_rank(logits, 4, "segmentation loss");
  const int64_t b = logits.extent(0), k = logits.extent(1);
  const int64_t h = logits.extent(2), w = logits.extent(3);
  if (static_cast<int64_t>(masks.size()) != b) {
    throw ShapeError("segmentation loss: " + std::to_string(masks.size()) +
                     " masks for batch " + std::to_string(b));
  }
  for (const LabelMask& m : masks) {
    if (m.h != h || m.w != w || static_cast<int64_t>(m.ids.size()) != h * w) {
      throw ShapeError("segmentation loss: mask " + std::to_string(m.h) + "x" +
                       std::to_string(m.w) + " does not match logits " +
                       std::to_string(h) + "x" + std::to_string(w));
    }
    for (uint8_t id : m.ids) {
      if (id >= k) {
        throw DataError("segmentation loss: class id " + std::to_string(id) +
                        " outside [0," + std::to_string(k) + ")");
      }
    }
  }
}

}  // namespace

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<LabelMask>& masks,
                          const std::vector<double>& class_weights) {
  check_masks(logits, masks);
  const int64_t b = logits.extent(0), k = logits.extent(1);
  const int64_t pos = logits.extent(2) * logits.extent(3);
  if (!class_weights.empty() && static_cast<int64_t>(class_weights.size()) != k) {
    throw ConfigError("cross_entropy_loss: " + std::to_string(class_weights.size()) +
                      " class weights for " + std::to_string(k) + " classes");
  }
  auto weight_of = [&class_weights](uint8_t id) {
    return class_weights.empty() ? 1.0 : class_weights[id];
  };

  const double* px = logits.data();
  double acc = 0.0;
  double wsum = 0.0;
  for (int64_t bi = 0; bi < b; ++bi) {
    const double* xb = px + bi * k * pos;
    const LabelMask& m = masks[static_cast<size_t>(bi)];
    for (int64_t p = 0; p < pos; ++p) {
      double mx = xb[p];
      for (int64_t i = 1; i < k; ++i) mx = std::max(mx, xb[i * pos + p]);
      double z = 0.0;
      for (int64_t i = 0; i < k; ++i) z += std::exp(xb[i * pos + p] - mx);
      const double logz = std::log(z) + mx;
      const uint8_t y = m.ids[static_cast<size_t>(p)];
      const double wv = weight_of(y);
      acc += wv * (logz - xb[y * pos + p]);
      wsum += wv;
    }
  }
  if (wsum <= 0.0) {
    throw ConfigError("cross_entropy_loss: total class weight is not positive");
  }
  const double value = acc / wsum;
  check_finite(&value, 1, "cross_entropy_loss");

  // Backward captures masks/weights by value; parent 0 is the logits.
  return op_result(
      {1}, {value}, {logits.node()},
      [b, k, pos, masks, class_weights, wsum](Node& self) {
        Node& pl = *self.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const double gout = self.grad[0] / wsum;
        for (int64_t bi = 0; bi < b; ++bi) {
          const double* xb = pl.data.data() + bi * k * pos;
          double* gb = pl.grad.data() + bi * k * pos;
          const LabelMask& m = masks[static_cast<size_t>(bi)];
          for (int64_t p = 0; p < pos; ++p) {
            double mx = xb[p];
            for (int64_t i = 1; i < k; ++i) mx = std::max(mx, xb[i * pos + p]);
            double z = 0.0;
            for (int64_t i = 0; i < k; ++i) z += std::exp(xb[i * pos + p] - mx);
            const uint8_t y = m.ids[static_cast<size_t>(p)];
            const double wv = class_weights.empty() ? 1.0 : class_weights[y];
            for (int64_t i = 0; i < k; ++i) {
              const double soft = std::exp(xb[i * pos + p] - mx) / z;
              const double target = i == y ? 1.0 : 0.0;
              gb[i * pos + p] += gout * wv * (soft - target);
            }
          }
        }
      },
      "cross_entropy_loss");
}

namespace {

// Dice over probabilities; separated so the public op can feed it softmax
// output while keeping one differentiable unit.
Tensor dice_from_probs(const Tensor& probs, const std::vector<LabelMask>& masks,
                       double eps) {
  const int64_t b = probs.extent(0), k = probs.extent(1);
  const int64_t pos = probs.extent(2) * probs.extent(3);
  if (k < 2) {
    throw ContractError("soft_dice_loss: need at least one foreground class");
  }
  const double* pp = probs.data();
  double mean_dice = 0.0;
  for (int64_t bi = 0; bi < b; ++bi) {
    const LabelMask& m = masks[static_cast<size_t>(bi)];
    for (int64_t ci = 1; ci < k; ++ci) {
      const double* po = pp + (bi * k + ci) * pos;
      double inter = 0.0, psum = 0.0, gsum = 0.0;
      for (int64_t p = 0; p < pos; ++p) {
        const double g = m.ids[static_cast<size_t>(p)] == ci ? 1.0 : 0.0;
        inter += po[p] * g;
        psum += po[p];
        gsum += g;
      }
      mean_dice += (2.0 * inter + eps) / (psum + gsum + eps);
    }
  }
  const double denom = static_cast<double>(b * (k - 1));
  const double value = 1.0 - mean_dice / denom;
  return op_result(
      {1}, {value}, {probs.node()},
      [b, k, pos, masks, eps, denom](Node& self) {
        Node& pn = *self.parents[0];
        if (!pn.requires_grad) return;
        pn.ensure_grad();
        const double gout = -self.grad[0] / denom;
        for (int64_t bi = 0; bi < b; ++bi) {
          const LabelMask& m = masks[static_cast<size_t>(bi)];
          for (int64_t ci = 1; ci < k; ++ci) {
            const double* po = pn.data.data() + (bi * k + ci) * pos;
            double* go = pn.grad.data() + (bi * k + ci) * pos;
            double inter = 0.0, psum = 0.0, gsum = 0.0;
            for (int64_t p = 0; p < pos; ++p) {
              const double g = m.ids[static_cast<size_t>(p)] == ci ? 1.0 : 0.0;
              inter += po[p] * g;
              psum += po[p];
              gsum += g;
            }
            const double u = psum + gsum + eps;
            const double num = 2.0 * inter + eps;
            for (int64_t p = 0; p < pos; ++p) {
              const double g = m.ids[static_cast<size_t>(p)] == ci ? 1.0 : 0.0;
              go[p] += gout * (2.0 * g * u - num) / (u * u);
            }
          }
        }
      },
      "soft_dice_loss");
}

}  // namespace

Tensor soft_dice_loss(const Tensor& logits, const std::vector<LabelMask>& masks,
                      double eps) {
  check_masks(logits, masks);
  if (!(eps > 0.0)) throw ConfigError("soft_dice_loss: eps must be positive");
  return dice_from_probs(softmax_channel(logits), masks, eps);
}

Tensor supervised_loss(const Tensor& logits, const std::vector<LabelMask>& masks,
                       const std::vector<double>& class_weights, double dice_eps) {
  return add(cross_entropy_loss(logits, masks, class_weights),
             soft_dice_loss(logits, masks, dice_eps));
}

Tensor total_loss(const Tensor& l_sup, const Tensor& l_cos, double lambda) {
  return add(l_sup, mul_scalar(l_cos, lambda));
}

}  // namespace udm
