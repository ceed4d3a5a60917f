#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "network.hpp"
#include "synth.hpp"

namespace udm {

// Optimizer and run-control settings. The stock learning rate is chosen so
// that training converges across seeds on the default synthetic task; hotter
// rates can diverge for some initializations.
struct TrainConfig {
  double lr = 0.005;
  double momentum = 0.9;
  int64_t epochs = 25;
  int64_t batch_size = 4;
  // Hard cap on optimization steps; 0 means epochs decide alone.
  int64_t max_steps = 0;
  // Multi-step decay: the learning rate is multiplied by lr_decay each time
  // the step counter crosses a milestone fraction of the planned total.
  std::vector<double> milestones = {0.6, 0.85};
  double lr_decay = 0.1;
  double lambda = 0.3;  // consistency-loss weight
  bool use_consistency = true;
  std::vector<double> class_weights;  // empty = uniform
  uint64_t seed = 1;
  int64_t threads = 1;  // evaluation fan-out; 1 guarantees bit-reproducibility

  void validate() const;
};

// Everything one run needs: model, optimizer, and data source.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  SynthConfig synth;
  std::string data_dir;            // when set, read this dataset instead of generating
  std::string out_dir = "runs/default";

  void validate() const;
};

// Canonical JSON image of a config; every field appears explicitly, so the
// dump written into checkpoints and logs is complete and stable.
nlohmann::json config_to_json(const RunConfig& cfg);

// Strict parse: unknown keys and type mismatches raise ConfigError. Missing
// keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config_file(const std::string& path);

// Applies one "--section.key value" style override onto a JSON config tree.
// The value string is parsed as JSON when possible (numbers, bools, arrays)
// and taken as a plain string otherwise. Unknown keys are rejected.
void apply_override(nlohmann::json& j, const std::string& dotted_key, const std::string& value);

}  // namespace udm
