#pragma once

#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace udm {

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;
};

// Binary confusion for one class id against everything else.
ConfusionCounts confusion(const LabelMask& pred, const LabelMask& gt, int cls);

// Overlap metrics from confusion counts. Any zero denominator resolves to 1
// when both masks are empty for the class and to 0 otherwise.
double metric_dsc(const ConfusionCounts& c);
double metric_iou(const ConfusionCounts& c);
double metric_acc(const ConfusionCounts& c);
double metric_sensitivity(const ConfusionCounts& c);
double metric_specificity(const ConfusionCounts& c);

// Flat indices of class pixels with at least one 4-neighbour outside the
// class; pixels on the image border count as boundary (outside is background).
std::vector<int64_t> boundary_pixels(const LabelMask& mask, int cls);

// 95th percentile (linear interpolation) of the pooled directed Euclidean
// boundary distances pred->gt and gt->pred. Infinity when either mask has no
// pixel of the class.
double hd95(const LabelMask& pred, const LabelMask& gt, int cls);

struct SegMetrics {
  double dsc = 0;
  double iou = 0;
  double acc = 0;
  double sen = 0;
  double spe = 0;
  double hd95 = 0;
};

SegMetrics seg_metrics(const LabelMask& pred, const LabelMask& gt, int cls);

// Hard prediction: per-pixel argmax over the channel axis of [K,H,W] or the
// selected sample of [B,K,H,W] logits. Ties resolve to the lowest class id.
LabelMask argmax_mask(const Tensor& logits, int64_t batch_index = 0);

}  // namespace udm
