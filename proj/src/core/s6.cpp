#include "s6.hpp"

#include <cmath>

namespace udm {

void init_fanin_uniform(Tensor& t, int64_t fan_in, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  double* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(-limit, limit);
}

S6Params s6_init(int64_t channels, const S6Config& cfg, Rng& rng) {
  if (channels < 1) throw ConfigError("s6_init: channels must be >= 1");
  if (cfg.state_dim < 1) throw ConfigError("s6_init: state_dim must be >= 1");
  if (!(cfg.dt_min > 0.0) || !(cfg.dt_max >= cfg.dt_min)) {
    throw ConfigError("s6_init: need 0 < dt_min <= dt_max");
  }
  S6Params p;
  p.channels = channels;
  p.state_dim = cfg.state_dim;
  p.dt_rank = cfg.dt_rank > 0 ? cfg.dt_rank : std::max<int64_t>(1, channels / 16);
  p.use_d = cfg.use_d;

  p.a_log = Tensor::zeros({channels, cfg.state_dim}, true);
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t n = 0; n < cfg.state_dim; ++n) {
      p.a_log.data()[c * cfg.state_dim + n] = std::log(static_cast<double>(n + 1));
    }
  }

  p.w_delta_down = Tensor::zeros({p.dt_rank, channels}, true);
  init_fanin_uniform(p.w_delta_down, channels, rng);
  p.w_delta_up = Tensor::zeros({channels, p.dt_rank}, true);
  init_fanin_uniform(p.w_delta_up, p.dt_rank, rng);

  // Bias set so softplus(bias) lands log-uniformly in [dt_min, dt_max]:
  // the inverse of softplus is log(expm1(y)).
  p.delta_bias = Tensor::zeros({channels}, true);
  for (int64_t c = 0; c < channels; ++c) {
    const double dt =
        std::exp(rng.uniform(std::log(cfg.dt_min), std::log(cfg.dt_max)));
    p.delta_bias.data()[c] = std::log(std::expm1(dt));
  }

  p.w_b = Tensor::zeros({cfg.state_dim, channels}, true);
  init_fanin_uniform(p.w_b, channels, rng);
  p.w_c = Tensor::zeros({cfg.state_dim, channels}, true);
  init_fanin_uniform(p.w_c, channels, rng);

  if (cfg.use_d) p.d = Tensor::full({channels}, 1.0, true);
  return p;
}

Tensor s6_forward(const Tensor& x, const S6Params& p, ScanKernel kernel) {
  if (x.rank() != 2 || x.extent(0) != p.channels) {
    throw ShapeError("s6_forward: expected [" + std::to_string(p.channels) +
                     ",L], got " + shape_str(x.shape()));
  }
  Tensor dt_low = matmul(p.w_delta_down, x);
  Tensor dt_raw = add_row_bias(matmul(p.w_delta_up, dt_low), p.delta_bias);
  Tensor delta = softplus(dt_raw);
  Tensor a = neg(udm::exp(p.a_log));
  Tensor bproj = matmul(p.w_b, x);
  Tensor cproj = matmul(p.w_c, x);
  return selective_scan(x, delta, a, bproj, cproj, p.use_d ? p.d : Tensor(), kernel);
}

void s6_collect(const S6Params& p, const std::string& prefix,
                std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".a_log", p.a_log);
  out.emplace_back(prefix + ".w_delta_down", p.w_delta_down);
  out.emplace_back(prefix + ".w_delta_up", p.w_delta_up);
  out.emplace_back(prefix + ".delta_bias", p.delta_bias);
  out.emplace_back(prefix + ".w_b", p.w_b);
  out.emplace_back(prefix + ".w_c", p.w_c);
  if (p.use_d) out.emplace_back(prefix + ".d", p.d);
}

}  // namespace udm
