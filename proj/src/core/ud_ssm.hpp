#pragma once

#include <array>
#include <functional>
#include <string>

#include "s6.hpp"
#include "scan_order.hpp"
#include "uncertainty.hpp"

namespace udm {

enum class ScanMode {
  uncertainty,  // pixel ranking from the channel-uncertainty sort
  raster,       // content-independent row/column raster baseline
};

ScanMode scan_mode_from_string(const std::string& s);
const char* to_string(ScanMode m);

struct UdSsmConfig {
  UncertaintyMetric metric = UncertaintyMetric::std_dev;
  ScanMode scan_mode = ScanMode::uncertainty;
  BlockPolicy block;
  std::array<bool, 4> enable_branch{true, true, true, true};
  // Scale each branch sequence by its learned alpha before the scan.
  bool reweight = true;
  // One parameter set serving all four branches instead of four independent ones.
  bool shared_s6 = false;
  ScanKernel kernel = ScanKernel::sequential;
};

struct UdSsmParams {
  std::array<S6Params, 4> s6;  // only s6[0] is populated when shared
  std::array<Tensor, 4> alpha;
  bool shared = false;
};

UdSsmParams ud_ssm_init(int64_t channels, const S6Config& s6cfg, const UdSsmConfig& cfg,
                        Rng& rng);

void ud_ssm_collect(const UdSsmParams& p, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out);

// Per-sample ranking artifacts handed to an inspection hook.
struct ScanRecord {
  int64_t sample = 0;
  UncertaintyMap uncertainty;  // empty values in raster mode
  ScanOrders orders;
  std::array<double, 4> branch_l2{};
};

using InspectionHook = std::function<void(const ScanRecord&)>;

struct UdSsmOutput {
  // Sum of the recovered branches, same shape as the block input.
  Tensor y;
  // Per-branch recovered maps (zeros for disabled branches); the consistency
  // loss reads these.
  std::array<Tensor, 4> recovered;
};

// x is [C,H,W] or [B,C,H,W]. For each sample: compute the channel-uncertainty
// map on raw values (no gradient flows through ranking or permutations),
// derive the four traversal orders, and per enabled branch gather the pixels
// into a sequence, scale by alpha, run the selective scan, and scatter the
// result back to the grid. Branch outputs are summed in fixed order.
UdSsmOutput ud_ssm_forward(const Tensor& x, const UdSsmParams& params,
                           const UdSsmConfig& cfg, const InspectionHook* hook = nullptr);

// 1 - (cos(r0,r2) + cos(r1,r3))/2 with per-pixel channel cosines averaged
// over pixels and batch; the opposite-direction branch pairs are pushed
// toward agreement. Value lies in [0, 2]; gradients reach both operands.
Tensor consistency_loss(const UdSsmOutput& out);

}  // namespace udm
