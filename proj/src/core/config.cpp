#include "config.hpp"

#include <algorithm>

#include "data_io.hpp"
#include "error.hpp"
#include "scan_kernels.hpp"
#include "uncertainty.hpp"

namespace udm {

namespace {

using json = nlohmann::json;

ScanKernel kernel_from_string(const std::string& s) {
  if (s == "sequential") return ScanKernel::sequential;
  if (s == "parallel") return ScanKernel::parallel;
  throw ConfigError("config: unknown scan kernel \"" + s + "\" (sequential|parallel)");
}

const char* kernel_to_string(ScanKernel k) {
  return k == ScanKernel::sequential ? "sequential" : "parallel";
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config: " + where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&key](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError("config: unknown key \"" + where + "." + key + "\"");
    }
  }
}

template <typename T>
void take(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for " + where + "." + key + ": " + e.what());
  }
}

void take_string(const json& obj, const char* key, std::string& out, const std::string& where) {
  take<std::string>(obj, key, out, where);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train: lr must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0,1)");
  if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be nonnegative");
  double prev = 0.0;
  for (double m : milestones) {
    if (!(m > prev && m < 1.0)) {
      throw ConfigError("train: milestones must be strictly increasing within (0,1)");
    }
    prev = m;
  }
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train: lr_decay must be in (0,1]");
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be nonnegative");
  for (double w : class_weights) {
    if (!(w > 0.0)) throw ConfigError("train: class weights must be positive");
  }
  if (threads < 1 || threads > 256) throw ConfigError("train: threads must be in [1,256]");
}

void RunConfig::validate() const {
  network.validate();
  train.validate();
  if (data_dir.empty()) synth.validate();
  if (!train.class_weights.empty() &&
      static_cast<int64_t>(train.class_weights.size()) != network.num_classes) {
    throw ConfigError("config: class_weights size must equal network.num_classes");
  }
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
}

json config_to_json(const RunConfig& cfg) {
  json j;
  json& n = j["network"];
  n["in_channels"] = cfg.network.in_channels;
  n["num_classes"] = cfg.network.num_classes;
  n["patch_size"] = cfg.network.patch_size;
  n["stage_channels"] = cfg.network.stage_channels;
  n["blocks_per_stage"] = cfg.network.blocks_per_stage;
  n["ln_eps"] = cfg.network.ln_eps;
  n["state_dim"] = cfg.network.s6.state_dim;
  n["dt_rank"] = cfg.network.s6.dt_rank;
  n["dt_min"] = cfg.network.s6.dt_min;
  n["dt_max"] = cfg.network.s6.dt_max;
  n["use_d"] = cfg.network.s6.use_d;
  n["metric"] = to_string(cfg.network.ud.metric);
  n["scan_mode"] = to_string(cfg.network.ud.scan_mode);
  n["block_mode"] = to_string(cfg.network.ud.block.mode);
  n["fixed_a"] = cfg.network.ud.block.fixed_a;
  n["a_v_min"] = cfg.network.ud.block.a_v_min;
  n["a_v_max"] = cfg.network.ud.block.a_v_max;
  n["enable_y1"] = cfg.network.ud.enable_branch[0];
  n["enable_y2"] = cfg.network.ud.enable_branch[1];
  n["enable_y3"] = cfg.network.ud.enable_branch[2];
  n["enable_y4"] = cfg.network.ud.enable_branch[3];
  n["reweight"] = cfg.network.ud.reweight;
  n["shared_s6"] = cfg.network.ud.shared_s6;
  n["kernel"] = kernel_to_string(cfg.network.ud.kernel);

  json& t = j["train"];
  t["lr"] = cfg.train.lr;
  t["momentum"] = cfg.train.momentum;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["max_steps"] = cfg.train.max_steps;
  t["milestones"] = cfg.train.milestones;
  t["lr_decay"] = cfg.train.lr_decay;
  t["lambda"] = cfg.train.lambda;
  t["use_consistency"] = cfg.train.use_consistency;
  t["class_weights"] = cfg.train.class_weights;
  t["seed"] = cfg.train.seed;
  t["threads"] = cfg.train.threads;

  json& s = j["synth"];
  s["seed"] = cfg.synth.seed;
  s["count"] = cfg.synth.count;
  s["size"] = cfg.synth.size;
  s["blob_count_min"] = cfg.synth.blob_count_min;
  s["blob_count_max"] = cfg.synth.blob_count_max;
  s["boundary_noise"] = cfg.synth.boundary_noise;
  s["texture_contrast"] = cfg.synth.texture_contrast;
  s["train_frac"] = cfg.synth.train_frac;
  s["val_frac"] = cfg.synth.val_frac;

  j["data_dir"] = cfg.data_dir;
  j["out_dir"] = cfg.out_dir;
  return j;
}

RunConfig config_from_json(const json& j) {
  check_keys(j, {"network", "train", "synth", "data_dir", "out_dir"}, "(top)");
  RunConfig cfg;

  if (j.contains("network")) {
    const json& n = j.at("network");
    check_keys(n,
               {"in_channels", "num_classes", "patch_size", "stage_channels", "blocks_per_stage",
                "ln_eps", "state_dim", "dt_rank", "dt_min", "dt_max", "use_d", "metric",
                "scan_mode", "block_mode", "fixed_a", "a_v_min", "a_v_max", "enable_y1",
                "enable_y2", "enable_y3", "enable_y4", "reweight", "shared_s6", "kernel"},
               "network");
    take(n, "in_channels", cfg.network.in_channels, "network");
    take(n, "num_classes", cfg.network.num_classes, "network");
    take(n, "patch_size", cfg.network.patch_size, "network");
    take(n, "stage_channels", cfg.network.stage_channels, "network");
    take(n, "blocks_per_stage", cfg.network.blocks_per_stage, "network");
    take(n, "ln_eps", cfg.network.ln_eps, "network");
    take(n, "state_dim", cfg.network.s6.state_dim, "network");
    take(n, "dt_rank", cfg.network.s6.dt_rank, "network");
    take(n, "dt_min", cfg.network.s6.dt_min, "network");
    take(n, "dt_max", cfg.network.s6.dt_max, "network");
    take(n, "use_d", cfg.network.s6.use_d, "network");
    std::string s;
    s = to_string(cfg.network.ud.metric);
    take_string(n, "metric", s, "network");
    cfg.network.ud.metric = uncertainty_metric_from_string(s);
    s = to_string(cfg.network.ud.scan_mode);
    take_string(n, "scan_mode", s, "network");
    cfg.network.ud.scan_mode = scan_mode_from_string(s);
    s = to_string(cfg.network.ud.block.mode);
    take_string(n, "block_mode", s, "network");
    cfg.network.ud.block.mode = block_mode_from_string(s);
    take(n, "fixed_a", cfg.network.ud.block.fixed_a, "network");
    take(n, "a_v_min", cfg.network.ud.block.a_v_min, "network");
    take(n, "a_v_max", cfg.network.ud.block.a_v_max, "network");
    for (int i = 0; i < 4; ++i) {
      const std::string key = "enable_y" + std::to_string(i + 1);
      bool v = cfg.network.ud.enable_branch[static_cast<size_t>(i)];
      take(n, key.c_str(), v, "network");
      cfg.network.ud.enable_branch[static_cast<size_t>(i)] = v;
    }
    take(n, "reweight", cfg.network.ud.reweight, "network");
    take(n, "shared_s6", cfg.network.ud.shared_s6, "network");
    s = kernel_to_string(cfg.network.ud.kernel);
    take_string(n, "kernel", s, "network");
    cfg.network.ud.kernel = kernel_from_string(s);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"lr", "momentum", "epochs", "batch_size", "max_steps", "milestones", "lr_decay",
                "lambda", "use_consistency", "class_weights", "seed", "threads"},
               "train");
    take(t, "lr", cfg.train.lr, "train");
    take(t, "momentum", cfg.train.momentum, "train");
    take(t, "epochs", cfg.train.epochs, "train");
    take(t, "batch_size", cfg.train.batch_size, "train");
    take(t, "max_steps", cfg.train.max_steps, "train");
    take(t, "milestones", cfg.train.milestones, "train");
    take(t, "lr_decay", cfg.train.lr_decay, "train");
    take(t, "lambda", cfg.train.lambda, "train");
    take(t, "use_consistency", cfg.train.use_consistency, "train");
    take(t, "class_weights", cfg.train.class_weights, "train");
    take(t, "seed", cfg.train.seed, "train");
    take(t, "threads", cfg.train.threads, "train");
  }

  if (j.contains("synth")) {
    const json& s = j.at("synth");
    check_keys(s,
               {"seed", "count", "size", "blob_count_min", "blob_count_max", "boundary_noise",
                "texture_contrast", "train_frac", "val_frac"},
               "synth");
    take(s, "seed", cfg.synth.seed, "synth");
    take(s, "count", cfg.synth.count, "synth");
    take(s, "size", cfg.synth.size, "synth");
    take(s, "blob_count_min", cfg.synth.blob_count_min, "synth");
    take(s, "blob_count_max", cfg.synth.blob_count_max, "synth");
    take(s, "boundary_noise", cfg.synth.boundary_noise, "synth");
    take(s, "texture_contrast", cfg.synth.texture_contrast, "synth");
    take(s, "train_frac", cfg.synth.train_frac, "synth");
    take(s, "val_frac", cfg.synth.val_frac, "synth");
  }

  take_string(j, "data_dir", cfg.data_dir, "(top)");
  take_string(j, "out_dir", cfg.out_dir, "(top)");
  cfg.validate();
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& j, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("config: empty override key");
  std::vector<std::string> parts;
  size_t start = 0;
  for (size_t i = 0; i <= dotted_key.size(); ++i) {
    if (i == dotted_key.size() || dotted_key[i] == '.') {
      parts.push_back(dotted_key.substr(start, i - start));
      start = i + 1;
    }
  }
  json* node = &j;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) {
      throw ConfigError("config: unknown override key \"" + dotted_key + "\"");
    }
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf)) {
    throw ConfigError("config: unknown override key \"" + dotted_key + "\"");
  }
  json& slot = (*node)[leaf];
  if (slot.is_object()) {
    throw ConfigError("config: override key \"" + dotted_key +
                      "\" addresses a section, not a value");
  }
  if (slot.is_string()) {
    slot = value;  // string-typed fields take the raw text
    return;
  }
  try {
    slot = json::parse(value);
  } catch (const json::exception&) {
    throw ConfigError("config: cannot parse override value \"" + value + "\" for \"" +
                      dotted_key + "\"");
  }
}

}  // namespace udm
