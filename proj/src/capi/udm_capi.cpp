#include <udm/udm.h>

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/error.hpp"
#include "core/metrics.hpp"
#include "core/trainer.hpp"

namespace {

thread_local std::string g_last_error;

constexpr const char* kVersion = "1.0.0";

int code_of(const udm::Error& e) { return static_cast<int>(e.code()); }

// Runs the body and funnels every failure into a status code + message.
template <typename F>
int guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return UDM_OK;
  } catch (const udm::Error& e) {
    g_last_error = e.what();
    return code_of(e);
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return UDM_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UDM_ERR_CONFIG;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_out(char** slot, const std::string& value) {
  if (slot) *slot = dup_string(value);
}

const char* require(const char* arg, const char* name) {
  if (!arg) throw udm::ConfigError(std::string("null argument: ") + name);
  return arg;
}

void require_ptr(const void* p, const char* name) {
  if (!p) throw udm::ConfigError(std::string("null argument: ") + name);
}

udm::RunConfig parse_config(const char* config_json) {
  require(config_json, "config_json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    throw udm::ConfigError(std::string("config: ") + e.what());
  }
  return udm::config_from_json(j);
}

// A loaded checkpoint reconstructed into a runnable network.
struct LoadedModel {
  udm::RunConfig config;
  udm::Network net;
};

LoadedModel load_model(const char* checkpoint_path) {
  const udm::Checkpoint ckpt = udm::read_checkpoint(require(checkpoint_path, "checkpoint_path"));
  LoadedModel m;
  try {
    m.config = udm::config_from_json(nlohmann::json::parse(ckpt.config_json));
  } catch (const nlohmann::json::exception& e) {
    throw udm::IoError(std::string(checkpoint_path) + ": embedded config: " + e.what());
  }
  m.net = udm::network_init(m.config.network, m.config.train.seed);
  udm::network_load_checkpoint(m.net, ckpt);
  return m;
}

udm::Dataset dataset_for(const udm::RunConfig& cfg, const char* data_dir_override) {
  if (data_dir_override && data_dir_override[0] != '\0') {
    return udm::read_dataset(data_dir_override);
  }
  if (!cfg.data_dir.empty()) return udm::read_dataset(cfg.data_dir);
  return udm::generate_synthetic(cfg.synth);
}

}  // namespace

struct udm_model {
  LoadedModel m;
};

extern "C" {

const char* udm_version(void) { return kVersion; }

const char* udm_last_error(void) { return g_last_error.c_str(); }

void udm_string_free(char* s) { std::free(s); }

int udm_config_default(char** out_json) {
  return guarded([&] {
    require_ptr(out_json, "out_json");
    set_out(out_json, udm::config_to_json(udm::RunConfig{}).dump(2));
  });
}

int udm_config_normalize(const char* config_json, const char* const* override_keys,
                         const char* const* override_values, int64_t n_overrides,
                         char** out_json) {
  return guarded([&] {
    udm::RunConfig base;
    if (config_json && config_json[0] != '\0') {
      base = parse_config(config_json);
    }
    nlohmann::json full = udm::config_to_json(base);
    if (n_overrides > 0) {
      require_ptr(override_keys, "override_keys");
      require_ptr(override_values, "override_values");
    }
    for (int64_t i = 0; i < n_overrides; ++i) {
      udm::apply_override(full, require(override_keys[i], "override key"),
                          require(override_values[i], "override value"));
    }
    const udm::RunConfig final_cfg = udm::config_from_json(full);
    set_out(out_json, udm::config_to_json(final_cfg).dump(2));
  });
}

int udm_synth_generate(const char* config_json, const char* out_dir) {
  return guarded([&] {
    const udm::RunConfig cfg = parse_config(config_json);
    require(out_dir, "out_dir");
    if (out_dir[0] == '\0') throw udm::ConfigError("synth: out_dir must not be empty");
    const udm::Dataset ds = udm::generate_synthetic(cfg.synth);
    udm::write_dataset(out_dir, ds);
  });
}

int udm_train(const char* config_json, char** out_summary) {
  return guarded([&] {
    const udm::RunConfig cfg = parse_config(config_json);
    const udm::TrainResult res = udm::train_run(cfg);
    if (out_summary) {
      nlohmann::json j;
      j["steps"] = res.steps;
      j["epochs"] = res.epochs;
      j["best_val_dsc"] = res.best_val_dsc;
      j["final_val_dsc"] = res.final_val_dsc;
      j["final_train_dsc"] = res.final_train_dsc;
      j["best_checkpoint"] = res.best_checkpoint;
      j["final_checkpoint"] = res.final_checkpoint;
      set_out(out_summary, j.dump(2));
    }
  });
}

int udm_eval(const char* checkpoint_path, const char* data_dir, const char* split,
             int64_t threads, char** out_csv, char** out_json) {
  return guarded([&] {
    const LoadedModel model = load_model(checkpoint_path);
    const udm::Dataset ds = dataset_for(model.config, data_dir);
    if (ds.num_classes != model.config.network.num_classes) {
      throw udm::ConfigError("eval: dataset has " + std::to_string(ds.num_classes) +
                             " classes but the checkpointed network expects " +
                             std::to_string(model.config.network.num_classes));
    }

    const std::string which = split ? split : "test";
    std::vector<int64_t> indices;
    if (which == "train") {
      indices = ds.train_idx;
    } else if (which == "val") {
      indices = ds.val_idx;
    } else if (which == "test") {
      indices = ds.test_idx;
    } else if (which == "all") {
      indices.resize(ds.samples.size());
      for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int64_t>(i);
    } else {
      throw udm::ConfigError("eval: unknown split \"" + which +
                             "\" (train|val|test|all)");
    }

    const udm::EvalReport rep =
        udm::evaluate_split(model.net, ds, indices, threads > 0 ? threads : 1);
    if (out_csv) set_out(out_csv, udm::eval_report_csv(rep));
    if (out_json) set_out(out_json, udm::eval_report_json(rep).dump(2));
  });
}

int udm_bench_scan(const int64_t* lengths, int64_t n_lengths, int64_t channels,
                   int64_t state_dim, uint64_t seed, char** out_csv) {
  return guarded([&] {
    require_ptr(lengths, "lengths");
    if (n_lengths < 1) throw udm::ConfigError("bench: need at least one length");
    const std::vector<int64_t> ls(lengths, lengths + n_lengths);
    const std::vector<udm::BenchRow> rows = udm::bench_scan(ls, channels, state_dim, seed);
    set_out(out_csv, udm::bench_csv(rows));
  });
}

int udm_inspect(const char* checkpoint_path, const char* image_pgm_path, const char* out_dir) {
  return guarded([&] {
    const LoadedModel model = load_model(checkpoint_path);
    const udm::GrayImage img = udm::read_pgm(require(image_pgm_path, "image_pgm_path"));
    require(out_dir, "out_dir");
    if (out_dir[0] == '\0') throw udm::ConfigError("inspect: out_dir must not be empty");
    udm::inspect_to_dir(model.net, img, out_dir);
  });
}

int udm_model_load(const char* checkpoint_path, udm_model** out_model) {
  return guarded([&] {
    require_ptr(out_model, "out_model");
    auto* handle = new udm_model{load_model(checkpoint_path)};
    *out_model = handle;
  });
}

void udm_model_free(udm_model* model) { delete model; }

int64_t udm_model_param_count(const udm_model* model) {
  if (!model) return -1;
  return udm::network_param_count(model->m.net);
}

int32_t udm_model_num_classes(const udm_model* model) {
  if (!model) return -1;
  return static_cast<int32_t>(model->m.config.network.num_classes);
}

int udm_model_predict_pgm(const udm_model* model, const char* image_pgm_path,
                          const char* mask_pgm_path) {
  return guarded([&] {
    if (!model) throw udm::ConfigError("null argument: model");
    const udm::GrayImage img = udm::read_pgm(require(image_pgm_path, "image_pgm_path"));
    udm::LabelMask pred;
    {
      udm::NoGradGuard guard;
      const udm::Tensor x = udm::image_to_tensor(img);
      const udm::NetworkOutput out = udm::network_forward(model->m.net, x);
      pred = udm::argmax_mask(out.logits, 0);
    }
    udm::GrayImage mask;
    mask.h = pred.h;
    mask.w = pred.w;
    mask.pix.resize(pred.ids.size());
    const int k = static_cast<int>(model->m.config.network.num_classes);
    for (size_t i = 0; i < pred.ids.size(); ++i) {
      mask.pix[i] = udm::mask_id_to_gray(pred.ids[i], k);
    }
    udm::write_pgm(require(mask_pgm_path, "mask_pgm_path"), mask);
  });
}

}  // extern "C"
