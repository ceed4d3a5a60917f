#pragma once

#include <string>
#include <utility>
#include <vector>

#include "data_io.hpp"
#include "ud_ssm.hpp"

namespace udm {

// Encoder-decoder segmentation model built from uncertainty-driven scan
// blocks: patch embedding, a mirrored stack of stages with stride-2
// downsampling and nearest-neighbour upsampling, concatenated skip
// connections, and a 1x1 head upsampled back to input resolution.
struct NetworkConfig {
  int64_t in_channels = 1;
  int64_t num_classes = 2;
  int64_t patch_size = 4;
  std::vector<int64_t> stage_channels = {32, 64, 128};
  int64_t blocks_per_stage = 2;
  double ln_eps = 1e-5;
  S6Config s6;
  UdSsmConfig ud;

  void validate() const;
  int64_t stages() const { return static_cast<int64_t>(stage_channels.size()); }
  // Total spatial reduction at the bottleneck.
  int64_t downsample_total() const { return patch_size << (stages() - 1); }
};

// One block: x + UDSSM(SiLU(DWConv(Lin1(LN(x))))) refined by a second linear
// on a residual path.
struct UdBlock {
  Tensor ln_gamma, ln_beta;
  Tensor lin1_w, lin1_b;
  Tensor dw_w;  // [C,3,3] depthwise
  UdSsmParams udssm;
  Tensor lin2_w, lin2_b;
};

struct ConvStem {
  Tensor w, b;  // [Co,Ci,k,k] with stride == k
};

struct DecoderUp {
  Tensor up_w, up_b;      // 1x1 after nearest-neighbour upsample
  Tensor skip_w, skip_b;  // 1x1 after skip concatenation
};

struct Network {
  NetworkConfig cfg;
  ConvStem stem;                          // patchify, k = patch_size
  std::vector<std::vector<UdBlock>> enc;  // [stage][block]
  std::vector<ConvStem> down;             // k = 2, between stage s and s+1
  std::vector<DecoderUp> up;              // indexed by target stage (0..stages-2)
  std::vector<std::vector<UdBlock>> dec;  // indexed by target stage
  Tensor head_w, head_b;                  // 1x1 to num_classes

  // Stable (name, tensor) registry in construction order; tensors alias the
  // structured fields above, so optimizer updates through the registry are
  // visible to the forward pass.
  std::vector<std::pair<std::string, Tensor>> params;

  const Tensor* find_param(const std::string& name) const;
};

// Deterministic initialization: a single seed-derived stream consumed in
// registry order. Identical (config, seed) gives bit-identical parameters.
Network network_init(const NetworkConfig& cfg, uint64_t seed);

struct NetworkOutput {
  Tensor logits;   // [B,K,H,W] at input resolution
  UdSsmOutput aux;  // branch outputs of the final decoder block
};

// image is [B,Cin,H,W] (or [Cin,H,W], promoted to a single-sample batch);
// H and W must be divisible by the total downsampling factor.
NetworkOutput network_forward(const Network& net, const Tensor& image,
                              const InspectionHook* hook = nullptr);

// One block applied to [B,C,H,W] (or [C,H,W]) features; exposed so block
// behaviour is testable in isolation. aux_out, when non-null, receives the
// UD-SSM branch outputs.
Tensor ud_block_forward(const UdBlock& blk, const NetworkConfig& cfg, const Tensor& x,
                        UdSsmOutput* aux_out = nullptr, const InspectionHook* hook = nullptr);

int64_t network_param_count(const Network& net);

// Current values of the four reweighting scalars of the final decoder block.
std::array<double, 4> network_trace_alphas(const Network& net);

// Checkpoint bridge. Loading validates names and shapes against the live
// network and copies values; the config block travels as opaque JSON text.
Checkpoint network_to_checkpoint(const Network& net, std::string config_json);
void network_load_checkpoint(Network& net, const Checkpoint& ckpt);

}  // namespace udm
