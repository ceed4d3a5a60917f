// Exercises the shared library strictly through its C interface.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <udm/udm.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("udm_capi_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct ApiString {
  char* ptr = nullptr;
  ~ApiString() { udm_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

// Small fast run config rendered through the C API itself.
std::string tiny_config(const std::string& out_dir) {
  const std::vector<std::pair<std::string, std::string>> overrides = {
      {"network.patch_size", "2"},     {"network.stage_channels", "[4]"},
      {"network.blocks_per_stage", "1"}, {"network.state_dim", "2"},
      {"network.dt_rank", "1"},          {"synth.count", "8"},
      {"synth.size", "16"},              {"train.epochs", "2"},
      {"train.batch_size", "2"},         {"train.seed", "7"},
      {"out_dir", out_dir},
  };
  std::vector<const char*> keys, values;
  for (const auto& [k, v] : overrides) {
    keys.push_back(k.c_str());
    values.push_back(v.c_str());
  }
  ApiString out;
  REQUIRE(udm_config_normalize(nullptr, keys.data(), values.data(),
                               static_cast<int64_t>(keys.size()), &out.ptr) == UDM_OK);
  return out.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("version and error-state basics") {
  CHECK(std::strlen(udm_version()) > 0);
  ApiString cfg;
  CHECK(udm_config_default(&cfg.ptr) == UDM_OK);
  CHECK(std::string(udm_last_error()).empty());  // success clears the slot
  CHECK(udm_config_default(nullptr) == UDM_ERR_CONFIG);
  CHECK_FALSE(std::string(udm_last_error()).empty());
}

TEST_CASE("config normalize applies overrides and rejects bad input") {
  const char* key = "train.lr";
  const char* value = "0.125";
  ApiString out;
  REQUIRE(udm_config_normalize(nullptr, &key, &value, 1, &out.ptr) == UDM_OK);
  const json cfg = json::parse(out.str());
  CHECK(cfg.at("train").at("lr").get<double>() == 0.125);
  CHECK(cfg.at("network").at("patch_size").get<int64_t>() == 4);  // untouched default

  const char* bad_key = "train.turbo";
  ApiString out2;
  CHECK(udm_config_normalize(nullptr, &bad_key, &value, 1, &out2.ptr) == UDM_ERR_CONFIG);
  CHECK(udm_config_normalize("{broken", nullptr, nullptr, 0, &out2.ptr) == UDM_ERR_CONFIG);
  CHECK(udm_config_normalize(R"({"nope": 1})", nullptr, nullptr, 0, &out2.ptr) ==
        UDM_ERR_CONFIG);
  const char* bad_value = "not a number";
  const char* lr = "train.lr";
  CHECK(udm_config_normalize(nullptr, &lr, &bad_value, 1, &out2.ptr) == UDM_ERR_CONFIG);
}

TEST_CASE("synthetic datasets generate through the api") {
  TempDir dir("synth");
  const std::string cfg = tiny_config(dir.file("unused"));
  REQUIRE(udm_synth_generate(cfg.c_str(), dir.file("data").c_str()) == UDM_OK);
  CHECK(std::filesystem::exists(dir.file("data/manifest.json")));
  CHECK(std::filesystem::exists(dir.file("data/images/0000.pgm")));
  CHECK(std::filesystem::exists(dir.file("data/masks/0000.pgm")));

  CHECK(udm_synth_generate(cfg.c_str(), "") == UDM_ERR_CONFIG);
  CHECK(udm_synth_generate("{bad", dir.file("x").c_str()) == UDM_ERR_CONFIG);
  CHECK(udm_synth_generate(nullptr, dir.file("x").c_str()) == UDM_ERR_CONFIG);
}

TEST_CASE("train, eval, and the reproduction guarantee") {
  TempDir dir("train");
  const std::string cfg = tiny_config(dir.file("run"));

  ApiString summary;
  REQUIRE(udm_train(cfg.c_str(), &summary.ptr) == UDM_OK);
  const json s = json::parse(summary.str());
  CHECK(s.at("steps").get<int64_t>() == 6);
  CHECK(s.at("epochs").get<int64_t>() == 2);
  const std::string ckpt = s.at("final_checkpoint").get<std::string>();
  REQUIRE(std::filesystem::exists(ckpt));
  REQUIRE(std::filesystem::exists(s.at("best_checkpoint").get<std::string>()));

  // Evaluating the checkpoint on its own training split reproduces the
  // summary's final train DSC.
  ApiString csv, js;
  REQUIRE(udm_eval(ckpt.c_str(), nullptr, "train", 1, &csv.ptr, &js.ptr) == UDM_OK);
  const json rep = json::parse(js.str());
  const double logged = s.at("final_train_dsc").get<double>();
  const double evald = rep.at("macro").at("dsc").get<double>();
  CHECK(std::abs(logged - evald) <= 1e-12);
  CHECK(csv.str().rfind("class,dsc,iou,acc,sensitivity,specificity,hd95,hd95_inf_count\n", 0) ==
        0);
  CHECK(rep.at("num_samples").get<int64_t>() == 6);

  // Split selection and failure paths.
  ApiString all_js;
  REQUIRE(udm_eval(ckpt.c_str(), nullptr, "all", 2, nullptr, &all_js.ptr) == UDM_OK);
  CHECK(json::parse(all_js.str()).at("num_samples").get<int64_t>() == 8);
  CHECK(udm_eval(ckpt.c_str(), nullptr, "bogus", 1, nullptr, nullptr) == UDM_ERR_CONFIG);
  CHECK(udm_eval("/nonexistent.udc", nullptr, "test", 1, nullptr, nullptr) == UDM_ERR_IO);
  CHECK(udm_eval(ckpt.c_str(), "/nonexistent_dir", "test", 1, nullptr, nullptr) == UDM_ERR_IO);

  // Training with an unreadable config and a numeric blow-up.
  CHECK(udm_train("{bad", nullptr) == UDM_ERR_CONFIG);
  json base = json::parse(cfg);
  base["train"]["lr"] = 1e18;
  base["out_dir"] = dir.file("nanrun");
  CHECK(udm_train(base.dump().c_str(), nullptr) == UDM_ERR_NUMERIC);
}

TEST_CASE("dataset directories round through train and eval") {
  TempDir dir("dirdata");
  const std::string cfg = tiny_config(dir.file("run"));
  REQUIRE(udm_synth_generate(cfg.c_str(), dir.file("data").c_str()) == UDM_OK);

  json with_dir = json::parse(cfg);
  with_dir["data_dir"] = dir.file("data");
  ApiString summary;
  REQUIRE(udm_train(with_dir.dump().c_str(), &summary.ptr) == UDM_OK);
  const json s = json::parse(summary.str());
  const std::string ckpt = s.at("final_checkpoint").get<std::string>();

  // The checkpoint remembers data_dir; eval without an override reads it.
  ApiString js;
  REQUIRE(udm_eval(ckpt.c_str(), nullptr, "train", 1, nullptr, &js.ptr) == UDM_OK);
  const double evald = json::parse(js.str()).at("macro").at("dsc").get<double>();
  CHECK(std::abs(s.at("final_train_dsc").get<double>() - evald) <= 1e-12);

  // An explicit data_dir override also works.
  ApiString js2;
  REQUIRE(udm_eval(ckpt.c_str(), dir.file("data").c_str(), "train", 1, nullptr, &js2.ptr) ==
          UDM_OK);
  CHECK(json::parse(js2.str()) == json::parse(js.str()));
}

TEST_CASE("bench emits timing rows and validates arguments") {
  const int64_t lengths[2] = {64, 128};
  ApiString csv;
  REQUIRE(udm_bench_scan(lengths, 2, 4, 4, 1, &csv.ptr) == UDM_OK);
  const std::string text = csv.str();
  CHECK(text.rfind("length,sequential_ns,parallel_ns\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);

  CHECK(udm_bench_scan(nullptr, 1, 4, 4, 1, &csv.ptr) == UDM_ERR_CONFIG);
  CHECK(udm_bench_scan(lengths, 0, 4, 4, 1, &csv.ptr) == UDM_ERR_CONFIG);
  CHECK(udm_bench_scan(lengths, 2, 0, 4, 1, &csv.ptr) == UDM_ERR_CONFIG);
}

TEST_CASE("inspect dumps artifacts for a checkpointed model") {
  TempDir dir("inspect");
  const std::string cfg = tiny_config(dir.file("run"));
  ApiString summary;
  REQUIRE(udm_train(cfg.c_str(), &summary.ptr) == UDM_OK);
  const std::string ckpt = json::parse(summary.str()).at("final_checkpoint").get<std::string>();
  REQUIRE(udm_synth_generate(cfg.c_str(), dir.file("data").c_str()) == UDM_OK);

  REQUIRE(udm_inspect(ckpt.c_str(), dir.file("data/images/0000.pgm").c_str(),
                      dir.file("dump").c_str()) == UDM_OK);
  CHECK(std::filesystem::exists(dir.file("dump/block0_p1.csv")));
  CHECK(std::filesystem::exists(dir.file("dump/block0_uncertainty.pgm")));
  CHECK(std::filesystem::exists(dir.file("dump/branch_norms.csv")));

  CHECK(udm_inspect(ckpt.c_str(), "/nonexistent.pgm", dir.file("d2").c_str()) == UDM_ERR_IO);
  CHECK(udm_inspect("/nonexistent.udc", dir.file("data/images/0000.pgm").c_str(),
                    dir.file("d2").c_str()) == UDM_ERR_IO);
}

TEST_CASE("model handles load, query, predict, and free") {
  TempDir dir("model");
  const std::string cfg = tiny_config(dir.file("run"));
  ApiString summary;
  REQUIRE(udm_train(cfg.c_str(), &summary.ptr) == UDM_OK);
  const std::string ckpt = json::parse(summary.str()).at("final_checkpoint").get<std::string>();
  REQUIRE(udm_synth_generate(cfg.c_str(), dir.file("data").c_str()) == UDM_OK);

  udm_model* model = nullptr;
  REQUIRE(udm_model_load(ckpt.c_str(), &model) == UDM_OK);
  REQUIRE(model != nullptr);
  CHECK(udm_model_param_count(model) > 0);
  CHECK(udm_model_num_classes(model) == 2);

  const std::string mask_path = dir.file("pred.pgm");
  REQUIRE(udm_model_predict_pgm(model, dir.file("data/images/0000.pgm").c_str(),
                                mask_path.c_str()) == UDM_OK);
  const std::string mask = slurp(mask_path);
  REQUIRE(mask.rfind("P5\n16 16\n255\n", 0) == 0);
  const std::string payload = mask.substr(13);
  REQUIRE(payload.size() == 256);
  for (unsigned char v : payload) CHECK((v == 0 || v == 255));

  CHECK(udm_model_predict_pgm(model, "/nonexistent.pgm", mask_path.c_str()) == UDM_ERR_IO);
  udm_model_free(model);
  udm_model_free(nullptr);
}
