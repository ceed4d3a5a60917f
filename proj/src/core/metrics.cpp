#include "metrics.hpp"

#include <algorithm>
#include <cmath>

namespace udm {

namespace {

void check_pair(const LabelMask& pred, const LabelMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw ShapeError("metrics: mask sizes differ, " + std::to_string(pred.h) + "x" +
                     std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                     std::to_string(gt.w));
  }
  if (static_cast<int64_t>(pred.ids.size()) != pred.numel() ||
      static_cast<int64_t>(gt.ids.size()) != gt.numel()) {
    throw ShapeError("metrics: mask buffer does not match extents");
  }
}

// Zero-denominator rule shared by the ratio metrics.
double ratio(int64_t num, int64_t den, const ConfusionCounts& c) {
  if (den != 0) return static_cast<double>(num) / static_cast<double>(den);
  const bool both_empty = c.tp + c.fp == 0 && c.tp + c.fn == 0;
  return both_empty ? 1.0 : 0.0;
}

}  // namespace

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& gt, int cls) {
  check_pair(pred, gt);
  ConfusionCounts c;
  for (size_t i = 0; i < pred.ids.size(); ++i) {
    const bool p = pred.ids[i] == cls;
    const bool g = gt.ids[i] == cls;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

double metric_dsc(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, c); }

double metric_iou(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn, c); }

double metric_acc(const ConfusionCounts& c) {
  return ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn, c);
}

double metric_sensitivity(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn, c); }

double metric_specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp, c); }

std::vector<int64_t> boundary_pixels(const LabelMask& mask, int cls) {
  std::vector<int64_t> out;
  const int64_t h = mask.h, w = mask.w;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      if (mask.ids[static_cast<size_t>(i * w + j)] != cls) continue;
      const bool edge =
          i == 0 || i == h - 1 || j == 0 || j == w - 1 ||
          mask.ids[static_cast<size_t>((i - 1) * w + j)] != cls ||
          mask.ids[static_cast<size_t>((i + 1) * w + j)] != cls ||
          mask.ids[static_cast<size_t>(i * w + j - 1)] != cls ||
          mask.ids[static_cast<size_t>(i * w + j + 1)] != cls;
      if (edge) out.push_back(i * w + j);
    }
  }
  return out;
}

namespace {

void directed_distances(const std::vector<int64_t>& from, const std::vector<int64_t>& to,
                        int64_t w, std::vector<double>& out) {
  for (int64_t a : from) {
    const double ai = static_cast<double>(a / w);
    const double aj = static_cast<double>(a % w);
    double best = INFINITY;
    for (int64_t b : to) {
      const double di = ai - static_cast<double>(b / w);
      const double dj = aj - static_cast<double>(b % w);
      best = std::min(best, di * di + dj * dj);
    }
    out.push_back(std::sqrt(best));
  }
}

}  // namespace

double hd95(const LabelMask& pred, const LabelMask& gt, int cls) {
  check_pair(pred, gt);
  const bool pred_has = std::any_of(pred.ids.begin(), pred.ids.end(),
                                    [cls](uint8_t v) { return v == cls; });
  const bool gt_has = std::any_of(gt.ids.begin(), gt.ids.end(),
                                  [cls](uint8_t v) { return v == cls; });
  if (!pred_has || !gt_has) return INFINITY;

  std::vector<int64_t> bp = boundary_pixels(pred, cls);
  std::vector<int64_t> bg = boundary_pixels(gt, cls);
  std::vector<double> d;
  d.reserve(bp.size() + bg.size());
  directed_distances(bp, bg, pred.w, d);
  directed_distances(bg, bp, pred.w, d);
  std::sort(d.begin(), d.end());
  const size_t m = d.size();
  const double pos = 0.95 * static_cast<double>(m - 1);
  const size_t lo = static_cast<size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 < m) return d[lo] + frac * (d[lo + 1] - d[lo]);
  return d[lo];
}

SegMetrics seg_metrics(const LabelMask& pred, const LabelMask& gt, int cls) {
  const ConfusionCounts c = confusion(pred, gt, cls);
  SegMetrics m;
  m.dsc = metric_dsc(c);
  m.iou = metric_iou(c);
  m.acc = metric_acc(c);
  m.sen = metric_sensitivity(c);
  m.spe = metric_specificity(c);
  m.hd95 = hd95(pred, gt, cls);
  return m;
}

LabelMask argmax_mask(const Tensor& logits, int64_t batch_index) {
  int64_t k, h, w;
  const double* base;
  if (logits.rank() == 3) {
    k = logits.extent(0);
    h = logits.extent(1);
    w = logits.extent(2);
    base = logits.data();
    if (batch_index != 0) throw ShapeError("argmax_mask: rank-3 input has one sample");
  } else if (logits.rank() == 4) {
    k = logits.extent(1);
    h = logits.extent(2);
    w = logits.extent(3);
    if (batch_index < 0 || batch_index >= logits.extent(0)) {
      throw ShapeError("argmax_mask: batch index out of range");
    }
    base = logits.data() + batch_index * k * h * w;
  } else {
    throw ShapeError("argmax_mask: expected rank 3 or 4, got " + shape_str(logits.shape()));
  }
  if (k > 256) throw ContractError("argmax_mask: more than 256 classes");
  LabelMask m;
  m.h = h;
  m.w = w;
  m.ids.resize(static_cast<size_t>(h * w));
  const int64_t pos = h * w;
  for (int64_t p = 0; p < pos; ++p) {
    int best = 0;
    double bv = base[p];
    for (int64_t i = 1; i < k; ++i) {
      const double v = base[i * pos + p];
      if (v > bv) {
        bv = v;
        best = static_cast<int>(i);
      }
    }
    m.ids[static_cast<size_t>(p)] = static_cast<uint8_t>(best);
  }
  return m;
}

}  // namespace udm
