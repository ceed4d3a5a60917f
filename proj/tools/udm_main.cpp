// Command-line front end; talks to the library exclusively through the C API.
#include <udm/udm.h>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

// Exit codes shared with the C API status values.
constexpr int kExitOk = UDM_OK;
constexpr int kExitConfig = UDM_ERR_CONFIG;
constexpr int kExitIo = UDM_ERR_IO;

int fail(int code) {
  std::fprintf(stderr, "error: %s\n", udm_last_error());
  return code;
}

// Owned C string from the API.
struct ApiString {
  char* ptr = nullptr;
  ~ApiString() { udm_string_free(ptr); }
  const char* get() const { return ptr ? ptr : ""; }
};

bool read_text_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return false;
  std::ostringstream buf;
  buf << in.rdbuf();
  out = buf.str();
  return true;
}

bool write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) return false;
  out << text;
  return out.good();
}

// Turns the tokens CLI11 didn't recognize into dotted-key/value override
// pairs: "--train.lr 0.05 --network.kernel parallel".
bool collect_overrides(const std::vector<std::string>& extras, std::vector<std::string>& keys,
                       std::vector<std::string>& values) {
  const std::vector<std::string>& tokens = extras;
  for (size_t i = 0; i < tokens.size(); i += 2) {
    const std::string& key = tokens[i];
    if (key.rfind("--", 0) != 0 || key.size() <= 2) {
      std::fprintf(stderr, "error: expected --section.key, got \"%s\"\n", key.c_str());
      return false;
    }
    if (i + 1 >= tokens.size()) {
      std::fprintf(stderr, "error: override %s is missing a value\n", key.c_str());
      return false;
    }
    keys.push_back(key.substr(2));
    values.push_back(tokens[i + 1]);
  }
  return true;
}

// Loads --config (when given), applies overrides, and returns the complete
// validated configuration JSON. Returns an exit code, kExitOk on success.
int resolve_config(const std::string& config_path, const std::vector<std::string>& extras,
                   std::string& out_json) {
  std::string file_text;
  if (!config_path.empty() && !read_text_file(config_path, file_text)) {
    std::fprintf(stderr, "error: cannot read config file: %s\n", config_path.c_str());
    return kExitIo;
  }

  std::vector<std::string> keys, values;
  if (!collect_overrides(extras, keys, values)) return kExitConfig;
  std::vector<const char*> key_ptrs, value_ptrs;
  for (const std::string& k : keys) key_ptrs.push_back(k.c_str());
  for (const std::string& v : values) value_ptrs.push_back(v.c_str());

  ApiString normalized;
  const int rc = udm_config_normalize(file_text.empty() ? nullptr : file_text.c_str(),
                                      key_ptrs.data(), value_ptrs.data(),
                                      static_cast<int64_t>(key_ptrs.size()), &normalized.ptr);
  if (rc != UDM_OK) return fail(rc);
  out_json = normalized.get();
  return kExitOk;
}

bool parse_lengths(const std::string& text, std::vector<int64_t>& out) {
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      size_t used = 0;
      const long long v = std::stoll(cell, &used);
      if (used != cell.size()) return false;
      out.push_back(v);
    } catch (const std::exception&) {
      return false;
    }
  }
  return !out.empty();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-driven selective-scan segmentation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every command");

  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::string image_path;
  std::string data_dir;
  std::string split = "test";
  std::string csv_out, json_out;
  std::string lengths_text = "4096,8192,16384,32768";
  int64_t threads = 1;
  int64_t channels = 8;
  int64_t state_dim = 8;
  uint64_t seed = 1;

  CLI::App* train = app.add_subcommand("train", "train a model and write logs + checkpoints");
  train->add_option("--config", config_path, "config JSON file (defaults apply when omitted)");
  train->allow_extras();

  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  evalc->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evalc->add_option("--data", data_dir, "dataset directory (default: checkpoint's source)");
  evalc->add_option("--split", split, "train|val|test|all (default test)");
  evalc->add_option("--threads", threads, "evaluation fan-out (default 1)");
  evalc->add_option("--csv-out", csv_out, "also write the CSV report to this file");
  evalc->add_option("--json-out", json_out, "also write the JSON report to this file");

  CLI::App* bench = app.add_subcommand("bench-scan", "time the scan kernels over lengths");
  bench->add_option("--lengths", lengths_text, "comma-separated sequence lengths");
  bench->add_option("--channels", channels, "channels per sequence (default 8)");
  bench->add_option("--state", state_dim, "state dimension (default 8)");
  bench->add_option("--seed", seed, "input seed (default 1)");

  CLI::App* inspect = app.add_subcommand("inspect", "dump ranking artifacts for one image");
  inspect->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  inspect->add_option("--image", image_path, "input PGM image")->required();
  inspect->add_option("--out", out_dir, "output directory")->required();

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
  synth->add_option("--config", config_path, "config JSON file (defaults apply when omitted)");
  synth->add_option("--out", out_dir, "output dataset directory")->required();
  synth->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (train->parsed()) {
    std::string config_json;
    const int rc = resolve_config(config_path, train->remaining(), config_json);
    if (rc != kExitOk) return rc;
    ApiString summary;
    const int status = udm_train(config_json.c_str(), &summary.ptr);
    if (status != UDM_OK) return fail(status);
    std::printf("%s\n", summary.get());
    return kExitOk;
  }

  if (evalc->parsed()) {
    ApiString csv, json;
    const int status = udm_eval(checkpoint.c_str(), data_dir.empty() ? nullptr : data_dir.c_str(),
                                split.c_str(), threads, &csv.ptr, &json.ptr);
    if (status != UDM_OK) return fail(status);
    std::printf("%s", csv.get());
    if (!csv_out.empty() && !write_text_file(csv_out, csv.get())) {
      std::fprintf(stderr, "error: cannot write %s\n", csv_out.c_str());
      return kExitIo;
    }
    if (!json_out.empty() && !write_text_file(json_out, std::string(json.get()) + "\n")) {
      std::fprintf(stderr, "error: cannot write %s\n", json_out.c_str());
      return kExitIo;
    }
    return kExitOk;
  }

  if (bench->parsed()) {
    std::vector<int64_t> lengths;
    if (!parse_lengths(lengths_text, lengths)) {
      std::fprintf(stderr, "error: --lengths wants comma-separated integers, got \"%s\"\n",
                   lengths_text.c_str());
      return kExitConfig;
    }
    ApiString csv;
    const int status = udm_bench_scan(lengths.data(), static_cast<int64_t>(lengths.size()),
                                      channels, state_dim, seed, &csv.ptr);
    if (status != UDM_OK) return fail(status);
    std::printf("%s", csv.get());
    return kExitOk;
  }

  if (inspect->parsed()) {
    const int status = udm_inspect(checkpoint.c_str(), image_path.c_str(), out_dir.c_str());
    if (status != UDM_OK) return fail(status);
    std::printf("wrote inspection dumps to %s\n", out_dir.c_str());
    return kExitOk;
  }

  if (synth->parsed()) {
    std::string config_json;
    const int rc = resolve_config(config_path, synth->remaining(), config_json);
    if (rc != kExitOk) return rc;
    const int status = udm_synth_generate(config_json.c_str(), out_dir.c_str());
    if (status != UDM_OK) return fail(status);
    std::printf("wrote dataset to %s\n", out_dir.c_str());
    return kExitOk;
  }

  return kExitConfig;  // unreachable: require_subcommand(1)
}
