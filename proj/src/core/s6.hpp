#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"

namespace udm {

struct S6Config {
  int64_t state_dim = 8;
  // 0 resolves to max(1, channels/16).
  int64_t dt_rank = 0;
  // Initial per-channel step size is log-uniform in [dt_min, dt_max].
  double dt_min = 1e-3;
  double dt_max = 0.1;
  bool use_d = true;
};

// One selective-scan branch over C channels. The state matrix is stored as
// a_log with A = -exp(a_log), which keeps A strictly negative (and the
// recurrence contractive for positive delta) no matter where SGD moves the
// parameter. a_log starts at log(n+1) per state column.
struct S6Params {
  Tensor a_log;         // [C,N]
  Tensor w_delta_down;  // [R,C]
  Tensor w_delta_up;    // [C,R]
  Tensor delta_bias;    // [C]
  Tensor w_b;           // [N,C]
  Tensor w_c;           // [N,C]
  Tensor d;             // [C], defined only when use_d
  bool use_d = true;
  int64_t channels = 0;
  int64_t state_dim = 0;
  int64_t dt_rank = 0;
};

S6Params s6_init(int64_t channels, const S6Config& cfg, Rng& rng);

// x is [C,L]: delta = softplus(Wup*(Wdown*x) + bias), B/C projections from x,
// then the fused recurrence. Input-dependent delta, B, C are what make the
// scan selective.
Tensor s6_forward(const Tensor& x, const S6Params& p, ScanKernel kernel);

// Appends (name, tensor) pairs under prefix; the ordering here is the
// checkpoint layout contract.
void s6_collect(const S6Params& p, const std::string& prefix,
                std::vector<std::pair<std::string, Tensor>>& out);

// Uniform init on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_fanin_uniform(Tensor& t, int64_t fan_in, Rng& rng);

}  // namespace udm
