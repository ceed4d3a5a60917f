#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/losses.hpp"
#include "core/metrics.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "gradcheck.hpp"

using namespace udm;
using udm_test::grad_check;
using udm_test::rand_tensor;

namespace {

// ---------------------------------------------------------------------------
// Independent oracles. These recompute every quantity from first principles
// with straight loops so the library implementations are checked against a
// second, structurally different derivation.
// ---------------------------------------------------------------------------

// Per-pixel softmax cross-entropy with optional class weights.
double oracle_ce(const Tensor& logits, const std::vector<LabelMask>& masks,
                 const std::vector<double>& weights) {
  const int64_t b = logits.extent(0), k = logits.extent(1);
  const int64_t h = logits.extent(2), w = logits.extent(3);
  double num = 0.0, den = 0.0;
  for (int64_t s = 0; s < b; ++s) {
    for (int64_t i = 0; i < h * w; ++i) {
      std::vector<double> z(static_cast<size_t>(k));
      for (int64_t c = 0; c < k; ++c) z[static_cast<size_t>(c)] = logits.data()[((s * k + c) * h * w) + i];
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - zmax);
      const int y = masks[static_cast<size_t>(s)].ids[static_cast<size_t>(i)];
      const double logp = (z[static_cast<size_t>(y)] - zmax) - std::log(sum);
      const double wt = weights.empty() ? 1.0 : weights[static_cast<size_t>(y)];
      num += wt * (-logp);
      den += wt;
    }
  }
  return num / den;
}

// Soft Dice loss over foreground classes, averaged over class and sample.
double oracle_dice(const Tensor& logits, const std::vector<LabelMask>& masks, double eps) {
  const int64_t b = logits.extent(0), k = logits.extent(1);
  const int64_t h = logits.extent(2), w = logits.extent(3);
  double acc = 0.0;
  for (int64_t s = 0; s < b; ++s) {
    for (int64_t c = 1; c < k; ++c) {
      double inter = 0.0, psum = 0.0, gsum = 0.0;
      for (int64_t i = 0; i < h * w; ++i) {
        std::vector<double> z(static_cast<size_t>(k));
        for (int64_t cc = 0; cc < k; ++cc) {
          z[static_cast<size_t>(cc)] = logits.data()[((s * k + cc) * h * w) + i];
        }
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double p = std::exp(z[static_cast<size_t>(c)] - zmax) / sum;
        const double g = masks[static_cast<size_t>(s)].ids[static_cast<size_t>(i)] == c ? 1.0 : 0.0;
        inter += p * g;
        psum += p;
        gsum += g;
      }
      acc += (2.0 * inter + eps) / (psum + gsum + eps);
    }
  }
  return 1.0 - acc / static_cast<double>(b * (k - 1));
}

struct OracleCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

OracleCounts oracle_confusion(const LabelMask& pred, const LabelMask& gt, int cls) {
  OracleCounts c;
  for (size_t i = 0; i < pred.ids.size(); ++i) {
    const int p = pred.ids[i] == cls;
    const int g = gt.ids[i] == cls;
    c.tp += p & g;
    c.fp += p & !g;
    c.fn += !p & g;
    c.tn += !p & !g;
  }
  return c;
}

double oracle_ratio(long num, long den, bool both_empty) {
  if (den != 0) return double(num) / double(den);
  return both_empty ? 1.0 : 0.0;
}

// Boundary detection via an explicitly padded grid instead of index tests.
std::vector<std::pair<int, int>> oracle_boundary(const LabelMask& m, int cls) {
  const int h = static_cast<int>(m.h), w = static_cast<int>(m.w);
  std::vector<int> pad(static_cast<size_t>((h + 2) * (w + 2)), 0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      pad[static_cast<size_t>((i + 1) * (w + 2) + (j + 1))] = m.ids[static_cast<size_t>(i * w + j)] == cls;
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int pi = i + 1, pj = j + 1;
      if (!pad[static_cast<size_t>(pi * (w + 2) + pj)]) continue;
      if (!pad[static_cast<size_t>((pi - 1) * (w + 2) + pj)] ||
          !pad[static_cast<size_t>((pi + 1) * (w + 2) + pj)] ||
          !pad[static_cast<size_t>(pi * (w + 2) + pj - 1)] ||
          !pad[static_cast<size_t>(pi * (w + 2) + pj + 1)]) {
        out.emplace_back(i, j);
      }
    }
  }
  return out;
}

double oracle_hd95(const LabelMask& pred, const LabelMask& gt, int cls) {
  bool pe = true, ge = true;
  for (uint8_t v : pred.ids) pe = pe && v != cls;
  for (uint8_t v : gt.ids) ge = ge && v != cls;
  if (pe || ge) return INFINITY;
  const auto bp = oracle_boundary(pred, cls);
  const auto bg = oracle_boundary(gt, cls);
  std::vector<double> pool;
  auto directed = [&pool](const std::vector<std::pair<int, int>>& from,
                          const std::vector<std::pair<int, int>>& to) {
    for (const auto& a : from) {
      double best = INFINITY;
      for (const auto& b : to) {
        const double di = a.first - b.first, dj = a.second - b.second;
        best = std::min(best, std::sqrt(di * di + dj * dj));
      }
      pool.push_back(best);
    }
  };
  directed(bp, bg);
  directed(bg, bp);
  std::sort(pool.begin(), pool.end());
  const double pos = 0.95 * static_cast<double>(pool.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, pool.size() - 1);
  return pool[lo] + (pos - static_cast<double>(lo)) * (pool[hi] - pool[lo]);
}

LabelMask make_mask(int64_t h, int64_t w, std::vector<uint8_t> ids) {
  LabelMask m;
  m.h = h;
  m.w = w;
  m.ids = std::move(ids);
  return m;
}

LabelMask rand_mask(Rng& rng, int64_t h, int64_t w, int k) {
  LabelMask m;
  m.h = h;
  m.w = w;
  m.ids.resize(static_cast<size_t>(h * w));
  for (auto& v : m.ids) v = static_cast<uint8_t>(rng.uniform_int(0, k - 1));
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

TEST_CASE("cross-entropy equals the naive per-pixel oracle") {
  Rng rng(2024);
  for (int rep = 0; rep < 8; ++rep) {
    const int64_t b = 1 + rep % 3, k = 2 + rep % 4, h = 3 + rep % 3, w = 2 + rep % 4;
    Tensor logits = rand_tensor(rng, {b, k, h, w}, -4.0, 4.0);
    std::vector<LabelMask> masks;
    for (int64_t s = 0; s < b; ++s) masks.push_back(rand_mask(rng, h, w, static_cast<int>(k)));

    std::vector<double> weights;
    if (rep % 2 == 1) {
      for (int64_t c = 0; c < k; ++c) weights.push_back(rng.uniform(0.2, 3.0));
    }
    const double got = cross_entropy_loss(logits, masks, weights).item();
    const double want = oracle_ce(logits, masks, weights);
    CAPTURE(rep);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("cross-entropy frozen values") {
  // Uniform logits over two classes: every pixel contributes ln 2.
  Tensor logits = Tensor::zeros({1, 2, 2, 2});
  std::vector<LabelMask> masks = {make_mask(2, 2, {0, 1, 1, 0})};
  CHECK(cross_entropy_loss(logits, masks).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  // Two pixels, hand-derived: pixel 0 has logits (0, ln 3) -> p = (1/4, 3/4)
  // with label 1; pixel 1 has logits (0, 0) -> p = (1/2, 1/2) with label 0.
  // Weights (2, 1): loss = (1*ln(4/3) + 2*ln 2) / 3.
  Tensor two = Tensor::from_data({1, 2, 1, 2}, {0.0, 0.0, std::log(3.0), 0.0});
  std::vector<LabelMask> m2 = {make_mask(1, 2, {1, 0})};
  const double want = (std::log(4.0 / 3.0) + 2.0 * std::log(2.0)) / 3.0;
  CHECK(cross_entropy_loss(two, m2, {2.0, 1.0}).item() == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("cross-entropy is invariant to a per-pixel logit shift") {
  Rng rng(7);
  Tensor logits = rand_tensor(rng, {1, 3, 2, 2}, -2.0, 2.0);
  std::vector<LabelMask> masks = {rand_mask(rng, 2, 2, 3)};
  const double base = cross_entropy_loss(logits, masks).item();

  Tensor shifted = Tensor::from_data(logits.shape(), logits.vec());
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t c = 0; c < 3; ++c) shifted.data()[c * 4 + i] += 100.0 + 3.0 * static_cast<double>(i);
  CHECK(cross_entropy_loss(shifted, masks).item() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("cross-entropy rejects malformed inputs") {
  Tensor logits = Tensor::zeros({1, 2, 2, 2});
  CHECK_THROWS_AS(cross_entropy_loss(logits, {}), ShapeError);
  CHECK_THROWS_AS(cross_entropy_loss(logits, {make_mask(2, 3, std::vector<uint8_t>(6, 0))}),
                  ShapeError);
  CHECK_THROWS_AS(cross_entropy_loss(logits, {make_mask(2, 2, {0, 1, 2, 0})}), DataError);
  CHECK_THROWS_AS(cross_entropy_loss(logits, {make_mask(2, 2, {0, 1, 1, 0})}, {1.0}),
                  ConfigError);
  CHECK_THROWS_AS(cross_entropy_loss(logits, {make_mask(2, 2, {0, 0, 0, 0})}, {0.0, 1.0}),
                  ConfigError);  // only class 0 present, total weight 0
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  Rng rng(31);
  std::vector<LabelMask> masks = {rand_mask(rng, 2, 3, 3), rand_mask(rng, 2, 3, 3)};
  auto run = [&](const std::vector<double>& weights) {
    auto f = [&](const std::vector<Tensor>& in) {
      return cross_entropy_loss(in[0], masks, weights);
    };
    auto res = grad_check(f, {rand_tensor(rng, {2, 3, 2, 3}, -2.0, 2.0)});
    CAPTURE(res.worst_where);
    CAPTURE(res.worst_analytic);
    CAPTURE(res.worst_fd);
    CHECK(res.ok());
    CHECK(res.checked == 36);
  };
  run({});
  run({0.5, 2.0, 1.25});
}

// ---------------------------------------------------------------------------
// Soft Dice
// ---------------------------------------------------------------------------

TEST_CASE("soft dice equals the naive oracle") {
  Rng rng(99);
  for (int rep = 0; rep < 8; ++rep) {
    const int64_t b = 1 + rep % 2, k = 2 + rep % 3, h = 2 + rep % 4, w = 3 + rep % 2;
    Tensor logits = rand_tensor(rng, {b, k, h, w}, -3.0, 3.0);
    std::vector<LabelMask> masks;
    for (int64_t s = 0; s < b; ++s) masks.push_back(rand_mask(rng, h, w, static_cast<int>(k)));
    const double got = soft_dice_loss(logits, masks).item();
    const double want = oracle_dice(logits, masks, 1e-5);
    CAPTURE(rep);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("soft dice frozen value at uniform probabilities") {
  // Uniform two-class logits give p = 1/2 everywhere; a mask with 2 of 4
  // foreground pixels yields dice = (2*1 + eps) / (2 + 2 + eps).
  Tensor logits = Tensor::zeros({1, 2, 2, 2});
  std::vector<LabelMask> masks = {make_mask(2, 2, {1, 0, 0, 1})};
  const double eps = 1e-5;
  const double want = 1.0 - (2.0 + eps) / (4.0 + eps);
  CHECK(soft_dice_loss(logits, masks, eps).item() == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("soft dice approaches zero for a confident correct prediction") {
  // Strongly peaked logits on the true class: dice -> 1, loss -> 0.
  const std::vector<uint8_t> ids = {1, 0, 1, 1, 0, 0};
  std::vector<double> z(2 * 6);
  for (int i = 0; i < 6; ++i) {
    z[static_cast<size_t>(i)] = ids[static_cast<size_t>(i)] == 0 ? 20.0 : -20.0;
    z[static_cast<size_t>(6 + i)] = ids[static_cast<size_t>(i)] == 1 ? 20.0 : -20.0;
  }
  Tensor logits = Tensor::from_data({1, 2, 2, 3}, std::move(z));
  std::vector<LabelMask> masks = {make_mask(2, 3, ids)};
  CHECK(soft_dice_loss(logits, masks).item() < 1e-6);
}

TEST_CASE("soft dice rejects malformed inputs") {
  CHECK_THROWS_AS(soft_dice_loss(Tensor::zeros({1, 1, 2, 2}),
                                 {make_mask(2, 2, {0, 0, 0, 0})}),
                  ContractError);
  CHECK_THROWS_AS(soft_dice_loss(Tensor::zeros({1, 2, 2, 2}),
                                 {make_mask(2, 2, {0, 0, 0, 0})}, 0.0),
                  ConfigError);
}

TEST_CASE("soft dice gradient matches finite differences") {
  Rng rng(47);
  std::vector<LabelMask> masks = {rand_mask(rng, 3, 2, 3), rand_mask(rng, 3, 2, 3)};
  auto f = [&](const std::vector<Tensor>& in) { return soft_dice_loss(in[0], masks); };
  auto res = grad_check(f, {rand_tensor(rng, {2, 3, 3, 2}, -2.0, 2.0)});
  CAPTURE(res.worst_where);
  CHECK(res.ok());
  CHECK(res.checked == 36);
}

// ---------------------------------------------------------------------------
// Combined losses
// ---------------------------------------------------------------------------

TEST_CASE("supervised loss is exactly cross-entropy plus dice") {
  Rng rng(55);
  Tensor logits = rand_tensor(rng, {2, 3, 4, 4}, -3.0, 3.0);
  std::vector<LabelMask> masks = {rand_mask(rng, 4, 4, 3), rand_mask(rng, 4, 4, 3)};
  const std::vector<double> weights = {1.0, 2.0, 0.5};
  const double sup = supervised_loss(logits, masks, weights).item();
  const double ce = cross_entropy_loss(logits, masks, weights).item();
  const double dice = soft_dice_loss(logits, masks).item();
  CHECK(sup == doctest::Approx(ce + dice).epsilon(1e-15));
}

TEST_CASE("total loss frozen combination") {
  Tensor sup = Tensor::scalar(1.0);
  Tensor cos = Tensor::scalar(0.5);
  CHECK(total_loss(sup, cos, 0.3).item() == doctest::Approx(1.15).epsilon(1e-15));
  CHECK(total_loss(sup, cos, 0.0).item() == doctest::Approx(1.0).epsilon(1e-15));

  // Gradients flow to both terms with the configured scale.
  Tensor a = Tensor::scalar(2.0);
  Tensor b = Tensor::scalar(3.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tensor t = total_loss(a, b, 0.3);
  backward(t);
  CHECK(a.grad()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b.grad()[0] == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("supervised loss gradient matches finite differences") {
  Rng rng(61);
  std::vector<LabelMask> masks = {rand_mask(rng, 2, 2, 2)};
  auto f = [&](const std::vector<Tensor>& in) { return supervised_loss(in[0], masks); };
  auto res = grad_check(f, {rand_tensor(rng, {1, 2, 2, 2}, -2.0, 2.0)});
  CAPTURE(res.worst_where);
  CHECK(res.ok());
}

// ---------------------------------------------------------------------------
// Confusion-based metrics
// ---------------------------------------------------------------------------

TEST_CASE("confusion counts and ratio metrics match brute force on random pairs") {
  Rng rng(404);
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 2 + rep % 3;
    LabelMask pred = rand_mask(rng, 8, 8, k);
    LabelMask gt = rand_mask(rng, 8, 8, k);
    // Sprinkle in empty-class cases: sometimes erase a class entirely.
    if (rep % 7 == 0) {
      for (auto& v : pred.ids) v = v == 1 ? 0 : v;
    }
    if (rep % 11 == 0) {
      for (auto& v : gt.ids) v = v == 1 ? 0 : v;
    }
    for (int cls = 0; cls < k; ++cls) {
      const ConfusionCounts c = confusion(pred, gt, cls);
      const OracleCounts o = oracle_confusion(pred, gt, cls);
      REQUIRE(c.tp == o.tp);
      REQUIRE(c.fp == o.fp);
      REQUIRE(c.fn == o.fn);
      REQUIRE(c.tn == o.tn);
      const bool both_empty = o.tp + o.fp == 0 && o.tp + o.fn == 0;
      CHECK(metric_dsc(c) == oracle_ratio(2 * o.tp, 2 * o.tp + o.fp + o.fn, both_empty));
      CHECK(metric_iou(c) == oracle_ratio(o.tp, o.tp + o.fp + o.fn, both_empty));
      CHECK(metric_acc(c) ==
            oracle_ratio(o.tp + o.tn, o.tp + o.tn + o.fp + o.fn, both_empty));
      CHECK(metric_sensitivity(c) == oracle_ratio(o.tp, o.tp + o.fn, both_empty));
      CHECK(metric_specificity(c) == oracle_ratio(o.tn, o.tn + o.fp, both_empty));
    }
  }
}

TEST_CASE("dice and jaccard satisfy their algebraic identity") {
  Rng rng(505);
  for (int rep = 0; rep < 200; ++rep) {
    LabelMask pred = rand_mask(rng, 8, 8, 2);
    LabelMask gt = rand_mask(rng, 8, 8, 2);
    const ConfusionCounts c = confusion(pred, gt, 1);
    const double dsc = metric_dsc(c);
    const double iou = metric_iou(c);
    CHECK(dsc == doctest::Approx(2.0 * iou / (1.0 + iou)).epsilon(1e-15));
  }
}

TEST_CASE("frozen 8x8 worked example") {
  // pred marks 4 pixels, gt marks 4 pixels, exactly 2 overlap:
  // tp=2 fp=2 fn=2 tn=58.
  std::vector<uint8_t> p(64, 0), g(64, 0);
  p[0] = p[1] = p[2] = p[3] = 1;
  g[2] = g[3] = g[4] = g[5] = 1;
  const LabelMask pred = make_mask(8, 8, std::move(p));
  const LabelMask gt = make_mask(8, 8, std::move(g));
  const ConfusionCounts c = confusion(pred, gt, 1);
  CHECK(c.tp == 2);
  CHECK(c.fp == 2);
  CHECK(c.fn == 2);
  CHECK(c.tn == 58);
  CHECK(metric_dsc(c) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(metric_iou(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(metric_acc(c) == doctest::Approx(60.0 / 64.0).epsilon(1e-15));
  CHECK(metric_sensitivity(c) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(metric_specificity(c) == doctest::Approx(58.0 / 60.0).epsilon(1e-15));
}

TEST_CASE("zero-denominator rule") {
  const LabelMask empty = make_mask(2, 2, {0, 0, 0, 0});
  const LabelMask some = make_mask(2, 2, {0, 1, 0, 0});

  // Both empty for class 1: perfect agreement.
  ConfusionCounts c = confusion(empty, empty, 1);
  CHECK(metric_dsc(c) == 1.0);
  CHECK(metric_iou(c) == 1.0);
  CHECK(metric_sensitivity(c) == 1.0);
  CHECK(metric_specificity(c) == 1.0);
  CHECK(metric_acc(c) == 1.0);

  // Prediction empty, target not: zero overlap scores.
  c = confusion(empty, some, 1);
  CHECK(metric_dsc(c) == 0.0);
  CHECK(metric_iou(c) == 0.0);
  CHECK(metric_sensitivity(c) == 0.0);
  CHECK(metric_specificity(c) == 1.0);

  // Target covers everything: specificity has no negatives to count.
  const LabelMask full = make_mask(2, 2, {1, 1, 1, 1});
  c = confusion(full, full, 1);
  CHECK(metric_specificity(c) == 0.0);
  CHECK(metric_dsc(c) == 1.0);
}

// ---------------------------------------------------------------------------
// Boundaries and hd95
// ---------------------------------------------------------------------------

TEST_CASE("boundary pixels: interior block and border behaviour") {
  // 3x3 block of class 1 inside 5x5: the 8 ring pixels are boundary, the
  // centre is not.
  std::vector<uint8_t> ids(25, 0);
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j) ids[static_cast<size_t>(i * 5 + j)] = 1;
  const LabelMask m = make_mask(5, 5, std::move(ids));
  auto b = boundary_pixels(m, 1);
  CHECK(b.size() == 8);
  CHECK(std::find(b.begin(), b.end(), 12) == b.end());  // centre (2,2) excluded

  // A fully filled image: border pixels face the outside, so only the centre
  // of a 3x3 image is interior.
  const LabelMask full = make_mask(3, 3, std::vector<uint8_t>(9, 1));
  auto bf = boundary_pixels(full, 1);
  CHECK(bf.size() == 8);
  CHECK(std::find(bf.begin(), bf.end(), 4) == bf.end());
}

TEST_CASE("hd95 frozen examples") {
  // Identical masks: every distance is zero.
  std::vector<uint8_t> ids(16, 0);
  ids[5] = ids[6] = 1;
  const LabelMask a = make_mask(4, 4, ids);
  CHECK(hd95(a, a, 1) == 0.0);

  // Single pixels three columns apart: both directed distances are 3.
  const LabelMask p1 = make_mask(1, 4, {1, 0, 0, 0});
  const LabelMask p2 = make_mask(1, 4, {0, 0, 0, 1});
  CHECK(hd95(p1, p2, 1) == doctest::Approx(3.0).epsilon(1e-15));

  // pred {0}, gt {0, 4} in a 1x5 strip: pooled distances [0, 0, 4], and the
  // interpolated 95th percentile lands at 0 + 0.9 * 4 = 3.6.
  const LabelMask q1 = make_mask(1, 5, {1, 0, 0, 0, 0});
  const LabelMask q2 = make_mask(1, 5, {1, 0, 0, 0, 1});
  CHECK(hd95(q1, q2, 1) == doctest::Approx(3.6).epsilon(1e-12));

  // Either side empty: undefined distance reported as infinity.
  const LabelMask empty = make_mask(1, 5, {0, 0, 0, 0, 0});
  CHECK(std::isinf(hd95(empty, q2, 1)));
  CHECK(std::isinf(hd95(q2, empty, 1)));
  CHECK(std::isinf(hd95(empty, empty, 1)));
}

TEST_CASE("hd95 matches the brute-force oracle on random pairs") {
  Rng rng(606);
  int finite_seen = 0;
  for (int rep = 0; rep < 200; ++rep) {
    LabelMask pred = rand_mask(rng, 8, 8, 2);
    LabelMask gt = rand_mask(rng, 8, 8, 2);
    if (rep % 9 == 0) {
      for (auto& v : pred.ids) v = 0;
    }
    const double got = hd95(pred, gt, 1);
    const double want = oracle_hd95(pred, gt, 1);
    CAPTURE(rep);
    if (std::isinf(want)) {
      CHECK(std::isinf(got));
    } else {
      ++finite_seen;
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
  CHECK(finite_seen > 150);
}

TEST_CASE("hd95 is symmetric in its arguments") {
  Rng rng(707);
  for (int rep = 0; rep < 20; ++rep) {
    const LabelMask a = rand_mask(rng, 8, 8, 2);
    const LabelMask b = rand_mask(rng, 8, 8, 2);
    const double ab = hd95(a, b, 1);
    const double ba = hd95(b, a, 1);
    if (std::isinf(ab)) {
      CHECK(std::isinf(ba));
    } else {
      CHECK(ab == doctest::Approx(ba).epsilon(1e-15));
    }
  }
}

// ---------------------------------------------------------------------------
// Argmax prediction and the bundled report
// ---------------------------------------------------------------------------

TEST_CASE("argmax mask picks the highest channel and breaks ties low") {
  // [K=3, 2, 2]: per-pixel channel values chosen by hand.
  Tensor logits = Tensor::from_data({3, 2, 2}, {
                                                   0.5, 2.0, 1.0, 7.0,  // class 0
                                                   0.5, 3.0, 1.0, 6.0,  // class 1
                                                   0.4, 2.5, 1.0, 8.0,  // class 2
                                               });
  const LabelMask m = argmax_mask(logits);
  CHECK(m.h == 2);
  CHECK(m.w == 2);
  CHECK(m.ids == std::vector<uint8_t>({0, 1, 0, 2}));  // pixel 0 and 2 are ties

  // Rank-4 batch selection: [B=2, K=2, H=1, W=2], flat index ((s*2+c)*2+p).
  std::vector<double> b(2 * 2 * 1 * 2, 0.0);
  b[1] = 1.0;  // sample 0, class 0, pixel 1 -> stays class 0
  b[6] = 1.0;  // sample 1, class 1, pixel 0 -> flips that pixel to class 1
  Tensor batch = Tensor::from_data({2, 2, 1, 2}, std::move(b));
  CHECK(argmax_mask(batch, 0).ids == std::vector<uint8_t>({0, 0}));
  CHECK(argmax_mask(batch, 1).ids == std::vector<uint8_t>({1, 0}));
  CHECK_THROWS_AS(argmax_mask(batch, 2), ShapeError);
  CHECK_THROWS_AS(argmax_mask(Tensor::zeros({2, 2})), ShapeError);
}

TEST_CASE("seg_metrics bundles the individual metrics") {
  Rng rng(808);
  const LabelMask pred = rand_mask(rng, 8, 8, 3);
  const LabelMask gt = rand_mask(rng, 8, 8, 3);
  for (int cls = 0; cls < 3; ++cls) {
    const SegMetrics m = seg_metrics(pred, gt, cls);
    const ConfusionCounts c = confusion(pred, gt, cls);
    CHECK(m.dsc == metric_dsc(c));
    CHECK(m.iou == metric_iou(c));
    CHECK(m.acc == metric_acc(c));
    CHECK(m.sen == metric_sensitivity(c));
    CHECK(m.spe == metric_specificity(c));
    CHECK(m.hd95 == hd95(pred, gt, cls));
  }
}

TEST_CASE("metrics reject mismatched masks") {
  const LabelMask a = make_mask(2, 2, {0, 0, 0, 0});
  const LabelMask b = make_mask(2, 3, {0, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(confusion(a, b, 0), ShapeError);
  CHECK_THROWS_AS(hd95(a, b, 0), ShapeError);
}
