#include "ud_ssm.hpp"

#include <cmath>

namespace udm {

ScanMode scan_mode_from_string(const std::string& s) {
  if (s == "uncertainty") return ScanMode::uncertainty;
  if (s == "raster") return ScanMode::raster;
  throw ConfigError("unknown scan mode '" + s + "'");
}

const char* to_string(ScanMode m) {
  return m == ScanMode::uncertainty ? "uncertainty" : "raster";
}

UdSsmParams ud_ssm_init(int64_t channels, const S6Config& s6cfg, const UdSsmConfig& cfg,
                        Rng& rng) {
  UdSsmParams p;
  p.shared = cfg.shared_s6;
  const int branches = cfg.shared_s6 ? 1 : 4;
  for (int i = 0; i < branches; ++i) p.s6[static_cast<size_t>(i)] = s6_init(channels, s6cfg, rng);
  for (int i = 0; i < 4; ++i) p.alpha[static_cast<size_t>(i)] = Tensor::scalar(1.0, true);
  return p;
}

void ud_ssm_collect(const UdSsmParams& p, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) {
  const int branches = p.shared ? 1 : 4;
  for (int i = 0; i < branches; ++i) {
    s6_collect(p.s6[static_cast<size_t>(i)], prefix + ".branch" + std::to_string(i), out);
  }
  for (int i = 0; i < 4; ++i) {
    out.emplace_back(prefix + ".alpha" + std::to_string(i), p.alpha[static_cast<size_t>(i)]);
  }
}

namespace {

struct SampleResult {
  std::array<Tensor, 4> recovered;
};

SampleResult forward_sample(const Tensor& xs, const UdSsmParams& params,
                            const UdSsmConfig& cfg, int64_t sample_index,
                            const InspectionHook* hook) {
  const int64_t h = xs.extent(1), w = xs.extent(2);
  ScanOrders orders;
  UncertaintyMap umap;
  if (cfg.scan_mode == ScanMode::raster) {
    orders = raster_orders(h, w);
  } else {
    umap = channel_uncertainty(xs, cfg.metric);
    SortResult ranked = rank_pixels(umap, cfg.block);
    orders = build_scan_orders(ranked.idx, h, w);
  }

  SampleResult res;
  for (int i = 0; i < 4; ++i) {
    const size_t bi = static_cast<size_t>(i);
    if (!cfg.enable_branch[bi]) {
      res.recovered[bi] = Tensor::zeros(xs.shape());
      continue;
    }
    Tensor seq = permute_gather(xs, orders.p[bi]);
    if (cfg.reweight) seq = scale_by(seq, params.alpha[bi]);
    const S6Params& sp = params.shared ? params.s6[0] : params.s6[bi];
    Tensor y = s6_forward(seq, sp, cfg.kernel);
    res.recovered[bi] = permute_scatter(y, orders.p[bi], h, w);
  }

  if (hook) {
    ScanRecord rec;
    rec.sample = sample_index;
    rec.uncertainty = std::move(umap);
    rec.orders = std::move(orders);
    for (int i = 0; i < 4; ++i) {
      const Tensor& r = res.recovered[static_cast<size_t>(i)];
      double acc = 0.0;
      const double* pr = r.data();
      for (int64_t k = 0; k < r.numel(); ++k) acc += pr[k] * pr[k];
      rec.branch_l2[static_cast<size_t>(i)] = std::sqrt(acc);
    }
    (*hook)(rec);
  }
  return res;
}

}  // namespace

UdSsmOutput ud_ssm_forward(const Tensor& x, const UdSsmParams& params,
                           const UdSsmConfig& cfg, const InspectionHook* hook) {
  UdSsmOutput out;
  if (x.rank() == 3) {
    SampleResult r = forward_sample(x, params, cfg, 0, hook);
    out.recovered = std::move(r.recovered);
  } else if (x.rank() == 4) {
    const int64_t bn = x.extent(0);
    std::array<std::vector<Tensor>, 4> per_branch;
    for (auto& v : per_branch) v.reserve(static_cast<size_t>(bn));
    for (int64_t b = 0; b < bn; ++b) {
      SampleResult r = forward_sample(select_batch(x, b), params, cfg, b, hook);
      for (int i = 0; i < 4; ++i) {
        per_branch[static_cast<size_t>(i)].push_back(r.recovered[static_cast<size_t>(i)]);
      }
    }
    for (int i = 0; i < 4; ++i) {
      out.recovered[static_cast<size_t>(i)] = stack_batch(per_branch[static_cast<size_t>(i)]);
    }
  } else {
    throw ShapeError("ud_ssm_forward: expected rank 3 or 4, got " + shape_str(x.shape()));
  }
  out.y = add(add(out.recovered[0], out.recovered[1]),
              add(out.recovered[2], out.recovered[3]));
  return out;
}

Tensor consistency_loss(const UdSsmOutput& out) {
  Tensor cs02 = cosine_sim_channel_mean(out.recovered[0], out.recovered[2]);
  Tensor cs13 = cosine_sim_channel_mean(out.recovered[1], out.recovered[3]);
  return add_scalar(mul_scalar(add(cs02, cs13), -0.5), 1.0);
}

}  // namespace udm
