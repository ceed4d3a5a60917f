#include "network.hpp"

#include <algorithm>

#include "error.hpp"
#include "ops.hpp"
#include "rng.hpp"

namespace udm {

namespace {

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape)); }

Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

Tensor fanin_param(Shape shape, int64_t fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  init_fanin_uniform(t, fan_in, rng);
  return t;
}

struct Builder {
  std::vector<std::pair<std::string, Tensor>>& out;

  Tensor reg(const std::string& name, Tensor t) {
    out.emplace_back(name, t);
    return t;
  }
};

UdBlock make_block(const std::string& prefix, int64_t c, const NetworkConfig& cfg, Rng& rng,
                   Builder& b) {
  UdBlock blk;
  blk.ln_gamma = b.reg(prefix + ".ln.gamma", ones_param({c}));
  blk.ln_beta = b.reg(prefix + ".ln.beta", zeros_param({c}));
  blk.lin1_w = b.reg(prefix + ".lin1.w", fanin_param({c, c}, c, rng));
  blk.lin1_b = b.reg(prefix + ".lin1.b", zeros_param({c}));
  blk.dw_w = b.reg(prefix + ".dw.w", fanin_param({c, 3, 3}, 9, rng));
  blk.udssm = ud_ssm_init(c, cfg.s6, cfg.ud, rng);
  ud_ssm_collect(blk.udssm, prefix + ".udssm", b.out);
  blk.lin2_w = b.reg(prefix + ".lin2.w", fanin_param({c, c}, c, rng));
  blk.lin2_b = b.reg(prefix + ".lin2.b", zeros_param({c}));
  return blk;
}

}  // namespace

void NetworkConfig::validate() const {
  if (in_channels < 1) throw ConfigError("network: in_channels must be positive");
  if (num_classes < 2 || num_classes > 256) {
    throw ConfigError("network: num_classes must be in [2, 256]");
  }
  if (patch_size < 1 || patch_size > 64) throw ConfigError("network: patch_size must be in [1, 64]");
  if (stage_channels.empty()) throw ConfigError("network: stage_channels must not be empty");
  for (int64_t c : stage_channels) {
    if (c < 1 || c > 4096) throw ConfigError("network: stage channel out of range");
  }
  if (blocks_per_stage < 1 || blocks_per_stage > 16) {
    throw ConfigError("network: blocks_per_stage must be in [1, 16]");
  }
  if (!(ln_eps > 0.0)) throw ConfigError("network: ln_eps must be positive");
  if (s6.state_dim < 1) throw ConfigError("network: state_dim must be positive");
  if (s6.dt_rank < 0) throw ConfigError("network: dt_rank must be nonnegative");
  if (!(s6.dt_min > 0.0) || !(s6.dt_max >= s6.dt_min)) {
    throw ConfigError("network: dt range invalid");
  }
  bool any_branch = false;
  for (bool e : ud.enable_branch) any_branch = any_branch || e;
  if (!any_branch) throw ConfigError("network: at least one scan branch must be enabled");
}

Network network_init(const NetworkConfig& cfg, uint64_t seed) {
  cfg.validate();
  Network net;
  net.cfg = cfg;
  Builder b{net.params};
  Rng rng = Rng::derive(seed, 0x4E455457ull);

  const auto& ch = cfg.stage_channels;
  const int64_t stages = cfg.stages();

  net.stem.w = b.reg("stem.w", fanin_param({ch[0], cfg.in_channels, cfg.patch_size, cfg.patch_size},
                                           cfg.in_channels * cfg.patch_size * cfg.patch_size, rng));
  net.stem.b = b.reg("stem.b", zeros_param({ch[0]}));

  net.enc.resize(static_cast<size_t>(stages));
  net.down.resize(static_cast<size_t>(stages - 1));
  for (int64_t s = 0; s < stages; ++s) {
    for (int64_t i = 0; i < cfg.blocks_per_stage; ++i) {
      const std::string prefix = "enc" + std::to_string(s) + ".block" + std::to_string(i);
      net.enc[static_cast<size_t>(s)].push_back(
          make_block(prefix, ch[static_cast<size_t>(s)], cfg, rng, b));
    }
    if (s + 1 < stages) {
      const std::string prefix = "down" + std::to_string(s);
      auto& d = net.down[static_cast<size_t>(s)];
      d.w = b.reg(prefix + ".w",
                  fanin_param({ch[static_cast<size_t>(s + 1)], ch[static_cast<size_t>(s)], 2, 2},
                              ch[static_cast<size_t>(s)] * 4, rng));
      d.b = b.reg(prefix + ".b", zeros_param({ch[static_cast<size_t>(s + 1)]}));
    }
  }

  net.up.resize(static_cast<size_t>(stages - 1));
  net.dec.resize(static_cast<size_t>(stages - 1));
  for (int64_t s = stages - 2; s >= 0; --s) {
    const std::string prefix = "dec" + std::to_string(s);
    const int64_t c = ch[static_cast<size_t>(s)];
    const int64_t c_deep = ch[static_cast<size_t>(s + 1)];
    auto& u = net.up[static_cast<size_t>(s)];
    u.up_w = b.reg(prefix + ".up.w", fanin_param({c, c_deep}, c_deep, rng));
    u.up_b = b.reg(prefix + ".up.b", zeros_param({c}));
    u.skip_w = b.reg(prefix + ".skip.w", fanin_param({c, 2 * c}, 2 * c, rng));
    u.skip_b = b.reg(prefix + ".skip.b", zeros_param({c}));
    for (int64_t i = 0; i < cfg.blocks_per_stage; ++i) {
      const std::string bprefix = prefix + ".block" + std::to_string(i);
      net.dec[static_cast<size_t>(s)].push_back(make_block(bprefix, c, cfg, rng, b));
    }
  }

  net.head_w = b.reg("head.w", fanin_param({cfg.num_classes, ch[0]}, ch[0], rng));
  net.head_b = b.reg("head.b", zeros_param({cfg.num_classes}));

  for (auto& [name, t] : net.params) t.set_requires_grad(true);
  return net;
}

const Tensor* Network::find_param(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return &t;
  }
  return nullptr;
}

Tensor ud_block_forward(const UdBlock& blk, const NetworkConfig& cfg, const Tensor& x,
                        UdSsmOutput* aux_out, const InspectionHook* hook) {
  Tensor t = layer_norm_channel(x, blk.ln_gamma, blk.ln_beta, cfg.ln_eps);
  t = channel_linear(t, blk.lin1_w, blk.lin1_b);
  t = silu(depthwise_conv3x3(t, blk.dw_w));
  UdSsmOutput ssm = ud_ssm_forward(t, blk.udssm, cfg.ud, hook);
  Tensor r = add(x, ssm.y);
  Tensor out = add(r, channel_linear(r, blk.lin2_w, blk.lin2_b));
  if (aux_out) *aux_out = std::move(ssm);
  return out;
}

NetworkOutput network_forward(const Network& net, const Tensor& image,
                              const InspectionHook* hook) {
  const NetworkConfig& cfg = net.cfg;
  Tensor x = image;
  if (x.rank() == 3) {
    x = stack_batch({x});
  }
  if (x.rank() != 4) {
    throw ShapeError("network: expected [B,C,H,W] input, got " + shape_str(image.shape()));
  }
  if (x.extent(1) != cfg.in_channels) {
    throw ShapeError("network: expected " + std::to_string(cfg.in_channels) +
                     " input channels, got " + std::to_string(x.extent(1)));
  }
  const int64_t div = cfg.downsample_total();
  if (x.extent(2) % div != 0 || x.extent(3) % div != 0) {
    throw ConfigError("network: input " + std::to_string(x.extent(2)) + "x" +
                      std::to_string(x.extent(3)) + " not divisible by the total downsampling " +
                      std::to_string(div));
  }

  const int64_t stages = cfg.stages();
  x = strided_conv(x, net.stem.w, net.stem.b, cfg.patch_size);

  NetworkOutput out;
  std::vector<Tensor> skips(static_cast<size_t>(stages));
  for (int64_t s = 0; s < stages; ++s) {
    const auto& blocks = net.enc[static_cast<size_t>(s)];
    for (size_t i = 0; i < blocks.size(); ++i) {
      // A single-stage model has no decoder; its last block then provides
      // the branch outputs for the consistency objective.
      const bool last_overall = stages == 1 && s == stages - 1 && i + 1 == blocks.size();
      x = ud_block_forward(blocks[i], cfg, x, last_overall ? &out.aux : nullptr, hook);
    }
    skips[static_cast<size_t>(s)] = x;
    if (s + 1 < stages) {
      x = strided_conv(x, net.down[static_cast<size_t>(s)].w, net.down[static_cast<size_t>(s)].b,
                       2);
    }
  }
  for (int64_t s = stages - 2; s >= 0; --s) {
    const DecoderUp& u = net.up[static_cast<size_t>(s)];
    x = channel_linear(upsample_nearest(x, 2), u.up_w, u.up_b);
    x = channel_linear(concat_channels(skips[static_cast<size_t>(s)], x), u.skip_w, u.skip_b);
    const auto& blocks = net.dec[static_cast<size_t>(s)];
    for (size_t i = 0; i < blocks.size(); ++i) {
      const bool last_block = s == 0 && i + 1 == blocks.size();
      x = ud_block_forward(blocks[i], cfg, x, last_block ? &out.aux : nullptr, hook);
    }
  }

  out.logits = upsample_nearest(channel_linear(x, net.head_w, net.head_b), cfg.patch_size);
  return out;
}

int64_t network_param_count(const Network& net) {
  int64_t n = 0;
  for (const auto& [name, t] : net.params) n += t.numel();
  return n;
}

std::array<double, 4> network_trace_alphas(const Network& net) {
  const auto& blocks = net.dec.empty() ? net.enc.back() : net.dec.front();
  const UdSsmParams& p = blocks.back().udssm;
  std::array<double, 4> a{};
  for (int i = 0; i < 4; ++i) a[static_cast<size_t>(i)] = p.alpha[static_cast<size_t>(i)].data()[0];
  return a;
}

Checkpoint network_to_checkpoint(const Network& net, std::string config_json) {
  Checkpoint ck;
  ck.config_json = std::move(config_json);
  ck.records.reserve(net.params.size());
  for (const auto& [name, t] : net.params) {
    ck.records.push_back({name, t.shape(), t.vec()});
  }
  return ck;
}

void network_load_checkpoint(Network& net, const Checkpoint& ckpt) {
  if (ckpt.records.size() != net.params.size()) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.records.size()) +
                    " tensors, network expects " + std::to_string(net.params.size()));
  }
  for (auto& [name, t] : net.params) {
    const CheckpointRecord* rec = ckpt.find(name);
    if (!rec) throw DataError("checkpoint is missing tensor " + name);
    if (rec->shape != t.shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_str(rec->shape) +
                      ", expected " + shape_str(t.shape()));
    }
    std::copy(rec->data.begin(), rec->data.end(), t.data());
  }
}

}  // namespace udm
