#pragma once

#include <vector>

#include "tensor.hpp"

namespace udm {

// Mean cross-entropy over all pixels of [B,K,H,W] logits against class-id
// masks, computed from a fused stable log-softmax. With class weights the
// mean is weight-normalized: sum_i w[y_i] * nll_i / sum_i w[y_i]; an empty
// weight vector means uniform. Mask ids must lie in [0, K).
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<LabelMask>& masks,
                          const std::vector<double>& class_weights = {});

// 1 - mean soft Dice over the foreground classes (1..K-1) and the batch.
// Per class and sample: dice = (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)
// over pixels, with p the softmax probability and g the one-hot target.
Tensor soft_dice_loss(const Tensor& logits, const std::vector<LabelMask>& masks,
                      double eps = 1e-5);

// Supervised loss: cross-entropy and soft Dice, equally weighted.
Tensor supervised_loss(const Tensor& logits, const std::vector<LabelMask>& masks,
                       const std::vector<double>& class_weights = {},
                       double dice_eps = 1e-5);

// total = l_sup + lambda * l_cos.
Tensor total_loss(const Tensor& l_sup, const Tensor& l_cos, double lambda);

}  // namespace udm
