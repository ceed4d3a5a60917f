#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace udm {

// Per-pixel dispersion of the channel vector. std_dev is the default used by
// the segmentation network; the others exist for ablations.
//   std_dev : population standard deviation over channels
//   mad     : mean absolute deviation from the channel mean
//   variance: population variance (std_dev squared)
//   entropy : Shannon entropy of the channel softmax, natural log
//   range   : negated top-two margin, -(max1 - max2); 0 when C == 1
enum class UncertaintyMetric { std_dev, mad, variance, entropy, range };

UncertaintyMetric uncertainty_metric_from_string(const std::string& s);
const char* to_string(UncertaintyMetric m);

// Plain row-major buffer; deliberately not a Tensor so nothing downstream can
// accidentally route gradients through the ranking path.
struct UncertaintyMap {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<double> values;
};

// x is [C,H,W] of raw feature values. Rejects non-finite inputs.
UncertaintyMap channel_uncertainty(const Tensor& x, UncertaintyMetric metric);

struct SortResult {
  // Flat pixel indices ordered by descending value; equal values tie-break by
  // ascending index, so the ranking is a deterministic bijection.
  std::vector<int64_t> idx;
  std::vector<double> sorted;
};

SortResult sort_descending(const std::vector<double>& values);

// Mean-pools an h x w map into (h/a) x (w/a) blocks. a must divide both
// extents.
UncertaintyMap block_pool(const UncertaintyMap& map, int64_t a);

// Expands a ranking of (h/a) x (w/a) blocks into a pixel ranking: blocks stay
// in rank order, pixels inside a block run row-major.
std::vector<int64_t> expand_block_order(const std::vector<int64_t>& block_idx,
                                        int64_t h, int64_t w, int64_t a);

// Block granularity policy. a_v below is min(h, w) of the feature map being
// scanned; the dynamic modes trade block size against feature-map scale in
// opposite directions.
enum class BlockMode {
  pixel,           // a = 1 (plain per-pixel ranking)
  fixed,           // a = fixed_a everywhere
  dynamic_fine,    // a = max(1, a_v / a_v_min): coarse at high res, pixel at the bottleneck
  dynamic_coarse,  // a = max(1, a_v_max / a_v): pixel at high res, coarse at the bottleneck
};

BlockMode block_mode_from_string(const std::string& s);
const char* to_string(BlockMode m);

struct BlockPolicy {
  BlockMode mode = BlockMode::pixel;
  int64_t fixed_a = 1;
  int64_t a_v_min = 4;
  int64_t a_v_max = 16;
};

// Resolves the policy for one feature map; the result divides both extents or
// a ConfigError is thrown.
int64_t resolve_block_size(const BlockPolicy& policy, int64_t h, int64_t w);

// Full ranking pipeline: uncertainty values are pooled at the resolved block
// size, sorted, and expanded back to pixels. Block size 1 is the plain sort.
SortResult rank_pixels(const UncertaintyMap& map, const BlockPolicy& policy);

}  // namespace udm
