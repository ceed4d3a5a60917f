#include "uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace udm {

UncertaintyMetric uncertainty_metric_from_string(const std::string& s) {
  if (s == "std") return UncertaintyMetric::std_dev;
  if (s == "mad") return UncertaintyMetric::mad;
  if (s == "variance") return UncertaintyMetric::variance;
  if (s == "entropy") return UncertaintyMetric::entropy;
  if (s == "range") return UncertaintyMetric::range;
  throw ConfigError("unknown uncertainty metric '" + s + "'");
}

const char* to_string(UncertaintyMetric m) {
  switch (m) {
    case UncertaintyMetric::std_dev: return "std";
    case UncertaintyMetric::mad: return "mad";
    case UncertaintyMetric::variance: return "variance";
    case UncertaintyMetric::entropy: return "entropy";
    case UncertaintyMetric::range: return "range";
  }
  return "?";
}

UncertaintyMap channel_uncertainty(const Tensor& x, UncertaintyMetric metric) {
  if (x.rank() != 3) {
    throw ShapeError("channel_uncertainty: expected [C,H,W], got " + shape_str(x.shape()));
  }
  check_finite(x.data(), static_cast<size_t>(x.numel()), "channel_uncertainty");
  const int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const int64_t pos = h * w;
  const double* px = x.data();
  UncertaintyMap map;
  map.h = h;
  map.w = w;
  map.values.resize(static_cast<size_t>(pos));
  std::vector<double> probs(metric == UncertaintyMetric::entropy ? static_cast<size_t>(c)
                                                                 : 0);
  for (int64_t p = 0; p < pos; ++p) {
    double u = 0.0;
    switch (metric) {
      case UncertaintyMetric::std_dev:
      case UncertaintyMetric::variance:
      case UncertaintyMetric::mad: {
        double mu = 0.0;
        for (int64_t i = 0; i < c; ++i) mu += px[i * pos + p];
        mu /= static_cast<double>(c);
        double acc = 0.0;
        for (int64_t i = 0; i < c; ++i) {
          const double d = px[i * pos + p] - mu;
          acc += metric == UncertaintyMetric::mad ? std::abs(d) : d * d;
        }
        acc /= static_cast<double>(c);
        u = metric == UncertaintyMetric::std_dev ? std::sqrt(acc) : acc;
        break;
      }
      case UncertaintyMetric::entropy: {
        double mx = px[p];
        for (int64_t i = 1; i < c; ++i) mx = std::max(mx, px[i * pos + p]);
        double z = 0.0;
        for (int64_t i = 0; i < c; ++i) {
          probs[static_cast<size_t>(i)] = std::exp(px[i * pos + p] - mx);
          z += probs[static_cast<size_t>(i)];
        }
        double ent = 0.0;
        for (int64_t i = 0; i < c; ++i) {
          const double pv = probs[static_cast<size_t>(i)] / z;
          if (pv > 0.0) ent -= pv * std::log(pv);
        }
        u = ent;
        break;
      }
      case UncertaintyMetric::range: {
        if (c == 1) {
          u = 0.0;
          break;
        }
        double m1 = -INFINITY, m2 = -INFINITY;
        for (int64_t i = 0; i < c; ++i) {
          const double v = px[i * pos + p];
          if (v > m1) {
            m2 = m1;
            m1 = v;
          } else if (v > m2) {
            m2 = v;
          }
        }
        u = -(m1 - m2);
        break;
      }
    }
    map.values[static_cast<size_t>(p)] = u;
  }
  return map;
}

SortResult sort_descending(const std::vector<double>& values) {
  for (size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) {
      throw NumericError("sort_descending: NaN at index " + std::to_string(i));
    }
  }
  SortResult r;
  const int64_t n = static_cast<int64_t>(values.size());
  r.idx.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) r.idx[static_cast<size_t>(i)] = i;
  std::sort(r.idx.begin(), r.idx.end(), [&values](int64_t a, int64_t b) {
    const double va = values[static_cast<size_t>(a)];
    const double vb = values[static_cast<size_t>(b)];
    if (va != vb) return va > vb;
    return a < b;
  });
  r.sorted.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    r.sorted[static_cast<size_t>(i)] = values[static_cast<size_t>(r.idx[static_cast<size_t>(i)])];
  }
  return r;
}

UncertaintyMap block_pool(const UncertaintyMap& map, int64_t a) {
  if (a < 1 || map.h % a != 0 || map.w % a != 0) {
    throw ConfigError("block_pool: block size " + std::to_string(a) +
                      " does not divide " + std::to_string(map.h) + "x" +
                      std::to_string(map.w));
  }
  UncertaintyMap out;
  out.h = map.h / a;
  out.w = map.w / a;
  out.values.assign(static_cast<size_t>(out.h * out.w), 0.0);
  const double inv = 1.0 / static_cast<double>(a * a);
  for (int64_t bi = 0; bi < out.h; ++bi) {
    for (int64_t bj = 0; bj < out.w; ++bj) {
      double acc = 0.0;
      for (int64_t r = 0; r < a; ++r) {
        const double* row = map.values.data() + (bi * a + r) * map.w + bj * a;
        for (int64_t ccol = 0; ccol < a; ++ccol) acc += row[ccol];
      }
      out.values[static_cast<size_t>(bi * out.w + bj)] = acc * inv;
    }
  }
  return out;
}

std::vector<int64_t> expand_block_order(const std::vector<int64_t>& block_idx, int64_t h,
                                        int64_t w, int64_t a) {
  if (a < 1 || h % a != 0 || w % a != 0) {
    throw ConfigError("expand_block_order: block size " + std::to_string(a) +
                      " does not divide " + std::to_string(h) + "x" + std::to_string(w));
  }
  const int64_t wb = w / a;
  const int64_t nb = (h / a) * wb;
  if (static_cast<int64_t>(block_idx.size()) != nb) {
    throw PermutationError("expand_block_order: got " + std::to_string(block_idx.size()) +
                           " blocks, expected " + std::to_string(nb));
  }
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(h * w));
  for (int64_t b : block_idx) {
    const int64_t bi = b / wb;
    const int64_t bj = b % wb;
    for (int64_t r = 0; r < a; ++r) {
      const int64_t base = (bi * a + r) * w + bj * a;
      for (int64_t ccol = 0; ccol < a; ++ccol) out.push_back(base + ccol);
    }
  }
  return out;
}

BlockMode block_mode_from_string(const std::string& s) {
  if (s == "pixel") return BlockMode::pixel;
  if (s == "fixed") return BlockMode::fixed;
  if (s == "dynamic_fine") return BlockMode::dynamic_fine;
  if (s == "dynamic_coarse") return BlockMode::dynamic_coarse;
  throw ConfigError("unknown block mode '" + s + "'");
}

const char* to_string(BlockMode m) {
  switch (m) {
    case BlockMode::pixel: return "pixel";
    case BlockMode::fixed: return "fixed";
    case BlockMode::dynamic_fine: return "dynamic_fine";
    case BlockMode::dynamic_coarse: return "dynamic_coarse";
  }
  return "?";
}

int64_t resolve_block_size(const BlockPolicy& policy, int64_t h, int64_t w) {
  int64_t a = 1;
  const int64_t av = std::min(h, w);
  switch (policy.mode) {
    case BlockMode::pixel:
      a = 1;
      break;
    case BlockMode::fixed:
      a = policy.fixed_a;
      break;
    case BlockMode::dynamic_fine:
      if (policy.a_v_min < 1) throw ConfigError("block policy: a_v_min must be >= 1");
      a = std::max<int64_t>(1, av / policy.a_v_min);
      break;
    case BlockMode::dynamic_coarse:
      if (av < 1) throw ConfigError("block policy: empty feature map");
      a = std::max<int64_t>(1, policy.a_v_max / av);
      break;
  }
  if (a < 1 || h % a != 0 || w % a != 0) {
    throw ConfigError("block policy: resolved block size " + std::to_string(a) +
                      " does not divide feature map " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  return a;
}

SortResult rank_pixels(const UncertaintyMap& map, const BlockPolicy& policy) {
  const int64_t a = resolve_block_size(policy, map.h, map.w);
  if (a == 1) return sort_descending(map.values);
  UncertaintyMap coarse = block_pool(map, a);
  SortResult blocks = sort_descending(coarse.values);
  SortResult out;
  out.idx = expand_block_order(blocks.idx, map.h, map.w, a);
  out.sorted.reserve(out.idx.size());
  for (int64_t p : out.idx) out.sorted.push_back(map.values[static_cast<size_t>(p)]);
  return out;
}

}  // namespace udm
