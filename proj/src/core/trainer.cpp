#include "trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <thread>

#include "error.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "ops.hpp"
#include "synth.hpp"

namespace udm {

namespace {

constexpr uint64_t kEpochShuffleSalt = 0x45504F43ull;  // per-epoch sample order
constexpr uint64_t kBenchSalt = 0x424E4348ull;         // benchmark input stream

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Append-only CSV sink: rows are only ever added, and the header is written
// once, when the file starts out empty.
class CsvLog {
 public:
  CsvLog(const std::string& path, const std::string& header) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
    f_ = std::fopen(path.c_str(), "ab");
    if (!f_) throw IoError("cannot open log file: " + path);
    if (fresh) row(header);
  }
  ~CsvLog() {
    if (f_) std::fclose(f_);
  }
  CsvLog(const CsvLog&) = delete;
  CsvLog& operator=(const CsvLog&) = delete;

  void row(const std::string& line) {
    std::fputs(line.c_str(), f_);
    std::fputc('\n', f_);
    std::fflush(f_);
  }

 private:
  std::FILE* f_ = nullptr;
};

// Per-sample, per-class metrics; the reduction to an EvalReport happens on
// the caller's thread in index order.
std::vector<SegMetrics> eval_one(const Network& net, const Sample& sample, int num_classes) {
  NoGradGuard guard;
  const Tensor image = image_to_tensor(sample.image);
  const NetworkOutput out = network_forward(net, image);
  const LabelMask pred = argmax_mask(out.logits, 0);
  std::vector<SegMetrics> per_class(static_cast<size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    per_class[static_cast<size_t>(c)] = seg_metrics(pred, sample.mask, c);
  }
  return per_class;
}

struct SgdState {
  std::vector<std::vector<double>> velocity;  // one buffer per registry entry
};

void sgd_step(Network& net, SgdState& state, double lr, double momentum) {
  for (size_t p = 0; p < net.params.size(); ++p) {
    Tensor& t = net.params[p].second;
    std::vector<double>& v = state.velocity[p];
    double* x = t.data();
    const int64_t n = t.numel();
    if (t.has_grad()) {
      const std::vector<double>& g = t.grad();
      for (int64_t i = 0; i < n; ++i) {
        v[static_cast<size_t>(i)] = momentum * v[static_cast<size_t>(i)] + g[static_cast<size_t>(i)];
        x[i] -= lr * v[static_cast<size_t>(i)];
      }
    } else {
      // Parameter untouched by this loss (e.g. a disabled branch): only the
      // momentum tail keeps moving.
      for (int64_t i = 0; i < n; ++i) {
        v[static_cast<size_t>(i)] *= momentum;
        x[i] -= lr * v[static_cast<size_t>(i)];
      }
    }
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::vector<uint8_t>(text.begin(), text.end()));
}

double time_scan_ns(const Tensor& x, const S6Params& p, ScanKernel kernel) {
  using clock = std::chrono::steady_clock;
  double best = std::numeric_limits<double>::infinity();
  double sink = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = clock::now();
    const Tensor y = s6_forward(x, p, kernel);
    const auto t1 = clock::now();
    sink += y.data()[0];
    best = std::min(best,
                    static_cast<double>(
                        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
  }
  // Keep the result observable so the scan cannot be optimized away.
  if (!std::isfinite(sink)) throw NumericError("benchmark scan produced non-finite output");
  return best;
}

}  // namespace

EvalReport evaluate_split(const Network& net, const Dataset& ds,
                          const std::vector<int64_t>& indices, int64_t threads) {
  const int num_classes = ds.num_classes;
  const size_t n = indices.size();
  EvalReport rep;
  rep.num_samples = static_cast<int64_t>(n);
  if (n == 0) return rep;

  for (int64_t idx : indices) {
    if (idx < 0 || idx >= static_cast<int64_t>(ds.samples.size())) {
      throw ContractError("evaluate_split: sample index out of range");
    }
  }

  std::vector<std::vector<SegMetrics>> rows(n);
  const size_t workers =
      std::min<size_t>(static_cast<size_t>(std::max<int64_t>(threads, 1)), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) {
      rows[i] = eval_one(net, ds.samples[static_cast<size_t>(indices[i])], num_classes);
    }
  } else {
    std::atomic<size_t> next{0};
    auto body = [&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        rows[i] = eval_one(net, ds.samples[static_cast<size_t>(indices[i])], num_classes);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t t = 0; t < workers; ++t) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
  }

  rep.per_class.resize(static_cast<size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    EvalClassRow& row = rep.per_class[static_cast<size_t>(c)];
    row.cls = c;
    double hd_sum = 0.0;
    int64_t hd_finite = 0;
    for (size_t i = 0; i < n; ++i) {
      const SegMetrics& m = rows[i][static_cast<size_t>(c)];
      row.dsc += m.dsc;
      row.iou += m.iou;
      row.acc += m.acc;
      row.sen += m.sen;
      row.spe += m.spe;
      if (std::isfinite(m.hd95)) {
        hd_sum += m.hd95;
        ++hd_finite;
      } else {
        ++row.hd95_inf;
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    row.dsc *= inv;
    row.iou *= inv;
    row.acc *= inv;
    row.sen *= inv;
    row.spe *= inv;
    row.hd95_mean = hd_finite > 0 ? hd_sum / static_cast<double>(hd_finite)
                                  : std::numeric_limits<double>::infinity();
  }

  rep.macro.cls = -1;
  const int64_t fg = num_classes - 1;
  double hd_macro = 0.0;
  bool hd_all_finite = true;
  for (int c = 1; c < num_classes; ++c) {
    const EvalClassRow& row = rep.per_class[static_cast<size_t>(c)];
    rep.macro.dsc += row.dsc;
    rep.macro.iou += row.iou;
    rep.macro.acc += row.acc;
    rep.macro.sen += row.sen;
    rep.macro.spe += row.spe;
    rep.macro.hd95_inf += row.hd95_inf;
    if (std::isfinite(row.hd95_mean)) {
      hd_macro += row.hd95_mean;
    } else {
      hd_all_finite = false;
    }
  }
  const double inv_fg = 1.0 / static_cast<double>(fg);
  rep.macro.dsc *= inv_fg;
  rep.macro.iou *= inv_fg;
  rep.macro.acc *= inv_fg;
  rep.macro.sen *= inv_fg;
  rep.macro.spe *= inv_fg;
  rep.macro.hd95_mean = hd_all_finite ? hd_macro * inv_fg
                                      : std::numeric_limits<double>::infinity();
  return rep;
}

namespace {

std::string eval_row_csv(const std::string& label, const EvalClassRow& row) {
  std::string line = label;
  for (double v : {row.dsc, row.iou, row.acc, row.sen, row.spe, row.hd95_mean}) {
    line += ',';
    line += fmt_g17(v);
  }
  line += ',';
  line += std::to_string(row.hd95_inf);
  return line;
}

nlohmann::json eval_row_json(const EvalClassRow& row) {
  nlohmann::json j;
  j["dsc"] = row.dsc;
  j["iou"] = row.iou;
  j["acc"] = row.acc;
  j["sensitivity"] = row.sen;
  j["specificity"] = row.spe;
  if (std::isfinite(row.hd95_mean)) {
    j["hd95"] = row.hd95_mean;
  } else {
    j["hd95"] = nullptr;  // JSON has no infinity; null marks "no finite distance"
  }
  j["hd95_inf_count"] = row.hd95_inf;
  return j;
}

}  // namespace

std::string eval_report_csv(const EvalReport& rep) {
  std::string out = "class,dsc,iou,acc,sensitivity,specificity,hd95,hd95_inf_count\n";
  if (rep.num_samples == 0) return out;
  for (const EvalClassRow& row : rep.per_class) {
    out += eval_row_csv(std::to_string(row.cls), row);
    out += '\n';
  }
  out += eval_row_csv("macro", rep.macro);
  out += '\n';
  return out;
}

nlohmann::json eval_report_json(const EvalReport& rep) {
  nlohmann::json j;
  j["num_samples"] = rep.num_samples;
  j["classes"] = nlohmann::json::array();
  if (rep.num_samples == 0) {
    j["macro"] = nullptr;
    return j;
  }
  for (const EvalClassRow& row : rep.per_class) {
    nlohmann::json r = eval_row_json(row);
    r["class"] = row.cls;
    j["classes"].push_back(std::move(r));
  }
  j["macro"] = eval_row_json(rep.macro);
  return j;
}

TrainResult train_run(const RunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;

  Dataset ds = cfg.data_dir.empty() ? generate_synthetic(cfg.synth) : read_dataset(cfg.data_dir);
  if (ds.num_classes != cfg.network.num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(ds.num_classes) +
                      " classes but network.num_classes is " +
                      std::to_string(cfg.network.num_classes));
  }
  if (cfg.network.in_channels != 1) {
    throw ConfigError("train: the dataset pipeline provides single-channel images; "
                      "network.in_channels must be 1");
  }
  if (ds.size % cfg.network.downsample_total() != 0) {
    throw ConfigError("train: image size " + std::to_string(ds.size) +
                      " is not divisible by the total downsampling factor " +
                      std::to_string(cfg.network.downsample_total()));
  }
  if (ds.train_idx.empty()) throw ConfigError("train: training split is empty");

  Network net = network_init(cfg.network, cfg.train.seed);

  // Cache train inputs once; masks are tiny and images re-encode losslessly.
  const int64_t train_n = static_cast<int64_t>(ds.train_idx.size());
  std::vector<Tensor> train_images(static_cast<size_t>(train_n));
  std::vector<LabelMask> train_masks(static_cast<size_t>(train_n));
  {
    NoGradGuard guard;
    for (int64_t i = 0; i < train_n; ++i) {
      const Sample& s = ds.samples[static_cast<size_t>(ds.train_idx[static_cast<size_t>(i)])];
      train_images[static_cast<size_t>(i)] = image_to_tensor(s.image);
      train_masks[static_cast<size_t>(i)] = s.mask;
    }
  }

  const int64_t steps_per_epoch = (train_n + cfg.train.batch_size - 1) / cfg.train.batch_size;
  int64_t planned = cfg.train.epochs * steps_per_epoch;
  if (cfg.train.max_steps > 0) planned = std::min(planned, cfg.train.max_steps);
  std::vector<int64_t> milestone_steps;
  milestone_steps.reserve(cfg.train.milestones.size());
  for (double frac : cfg.train.milestones) {
    milestone_steps.push_back(static_cast<int64_t>(std::floor(frac * static_cast<double>(planned))));
  }

  SgdState sgd;
  sgd.velocity.resize(net.params.size());
  for (size_t p = 0; p < net.params.size(); ++p) {
    sgd.velocity[p].assign(static_cast<size_t>(net.params[p].second.numel()), 0.0);
  }

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  CsvLog train_log(cfg.out_dir + "/train_log.csv",
                   "epoch,steps,lr,train_sup,train_cos,train_total,val_dsc");
  CsvLog alpha_log(cfg.out_dir + "/alpha_trace.csv", "alpha1,alpha2,alpha3,alpha4");

  const std::string config_json = config_to_json(cfg).dump();
  TrainResult res;
  res.best_checkpoint = cfg.out_dir + "/checkpoint_best.udc";
  res.final_checkpoint = cfg.out_dir + "/checkpoint_final.udc";
  res.step_total.reserve(static_cast<size_t>(planned));

  int64_t global_step = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  bool wrote_best = false;
  double last_val = -1.0;

  for (int64_t epoch = 0; epoch < cfg.train.epochs && global_step < planned; ++epoch) {
    // Deterministic per-epoch sample order.
    std::vector<int64_t> order(static_cast<size_t>(train_n));
    for (int64_t i = 0; i < train_n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng = Rng::derive(cfg.train.seed, kEpochShuffleSalt + static_cast<uint64_t>(epoch));
    for (int64_t i = train_n - 1; i > 0; --i) {
      const int64_t j = shuffle_rng.uniform_int(0, i);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double sup_sum = 0.0, cos_sum = 0.0, tot_sum = 0.0;
    int64_t epoch_steps = 0;
    double epoch_lr = cfg.train.lr;

    for (int64_t start = 0; start < train_n && global_step < planned;
         start += cfg.train.batch_size) {
      ++global_step;
      int decays = 0;
      for (int64_t ms : milestone_steps) {
        if (ms < global_step) ++decays;
      }
      epoch_lr = cfg.train.lr * std::pow(cfg.train.lr_decay, decays);

      const int64_t stop = std::min(start + cfg.train.batch_size, train_n);
      std::vector<Tensor> batch_images;
      std::vector<LabelMask> batch_masks;
      batch_images.reserve(static_cast<size_t>(stop - start));
      batch_masks.reserve(static_cast<size_t>(stop - start));
      for (int64_t i = start; i < stop; ++i) {
        const int64_t s = order[static_cast<size_t>(i)];
        batch_images.push_back(train_images[static_cast<size_t>(s)]);
        batch_masks.push_back(train_masks[static_cast<size_t>(s)]);
      }
      const Tensor batch = stack_batch(batch_images);

      const NetworkOutput out = network_forward(net, batch);
      const Tensor l_sup = supervised_loss(out.logits, batch_masks, cfg.train.class_weights);
      double cos_value = 0.0;
      Tensor total = l_sup;
      if (cfg.train.use_consistency) {
        const Tensor l_cos = consistency_loss(out.aux);
        cos_value = l_cos.item();
        total = total_loss(l_sup, l_cos, cfg.train.lambda);
      }
      const double total_value = total.item();
      if (!std::isfinite(total_value)) {
        throw NumericError("train: non-finite loss at step " + std::to_string(global_step) +
                           " (epoch " + std::to_string(epoch + 1) + ")");
      }

      for (auto& [name, t] : net.params) t.zero_grad();
      backward(total);
      sgd_step(net, sgd, epoch_lr, cfg.train.momentum);

      res.step_total.push_back(total_value);
      sup_sum += l_sup.item();
      cos_sum += cos_value;
      tot_sum += total_value;
      ++epoch_steps;
    }

    res.epochs = epoch + 1;
    res.steps = global_step;

    last_val = ds.val_idx.empty()
                   ? -1.0
                   : evaluate_split(net, ds, ds.val_idx, cfg.train.threads).headline_dsc();

    const double inv_steps = epoch_steps > 0 ? 1.0 / static_cast<double>(epoch_steps) : 0.0;
    std::string line = std::to_string(epoch + 1);
    line += ',' + std::to_string(global_step);
    line += ',' + fmt_g17(epoch_lr);
    line += ',' + fmt_g17(sup_sum * inv_steps);
    line += ',' + fmt_g17(cos_sum * inv_steps);
    line += ',' + fmt_g17(tot_sum * inv_steps);
    line += ',' + fmt_g17(last_val);
    train_log.row(line);

    const std::array<double, 4> alphas = network_trace_alphas(net);
    alpha_log.row(fmt_g17(alphas[0]) + ',' + fmt_g17(alphas[1]) + ',' + fmt_g17(alphas[2]) +
                  ',' + fmt_g17(alphas[3]));

    if (!ds.val_idx.empty() && last_val > best_val) {
      best_val = last_val;
      wrote_best = true;
      write_checkpoint(res.best_checkpoint, network_to_checkpoint(net, config_json));
    }
  }

  write_checkpoint(res.final_checkpoint, network_to_checkpoint(net, config_json));
  if (!wrote_best) {
    // No validation data: the final model is the best model on record.
    write_checkpoint(res.best_checkpoint, network_to_checkpoint(net, config_json));
  }

  res.best_val_dsc = wrote_best ? best_val : -1.0;
  res.final_val_dsc = last_val;
  res.final_train_dsc = evaluate_split(net, ds, ds.train_idx, cfg.train.threads).headline_dsc();

  nlohmann::json summary;
  summary["steps"] = res.steps;
  summary["epochs"] = res.epochs;
  summary["best_val_dsc"] = res.best_val_dsc;
  summary["final_val_dsc"] = res.final_val_dsc;
  summary["final_train_dsc"] = res.final_train_dsc;
  summary["param_count"] = network_param_count(net);
  write_text_file(cfg.out_dir + "/summary.json", summary.dump(2) + "\n");
  return res;
}

std::vector<BenchRow> bench_scan(const std::vector<int64_t>& lengths, int64_t channels,
                                 int64_t state_dim, uint64_t seed) {
  if (channels < 1 || state_dim < 1) {
    throw ConfigError("bench: channels and state_dim must be positive");
  }
  NoGradGuard guard;
  S6Config scfg;
  scfg.state_dim = state_dim;
  Rng rng = Rng::derive(seed, kBenchSalt);
  S6Params params = s6_init(channels, scfg, rng);

  std::vector<BenchRow> rows;
  rows.reserve(lengths.size());
  for (int64_t len : lengths) {
    if (len < 1) throw ConfigError("bench: lengths must be positive");
    Tensor x = Tensor::zeros({channels, len});
    double* xd = x.data();
    for (int64_t i = 0; i < channels * len; ++i) xd[i] = rng.uniform(-1.0, 1.0);
    BenchRow row;
    row.length = len;
    row.sequential_ns = time_scan_ns(x, params, ScanKernel::sequential);
    row.parallel_ns = time_scan_ns(x, params, ScanKernel::parallel);
    rows.push_back(row);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "length,sequential_ns,parallel_ns\n";
  for (const BenchRow& row : rows) {
    out += std::to_string(row.length);
    out += ',' + fmt_g17(row.sequential_ns);
    out += ',' + fmt_g17(row.parallel_ns);
    out += '\n';
  }
  return out;
}

void inspect_to_dir(const Network& net, const GrayImage& image, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  std::vector<ScanRecord> records;
  InspectionHook hook = [&records](const ScanRecord& rec) { records.push_back(rec); };
  {
    NoGradGuard guard;
    const Tensor x = image_to_tensor(image);
    (void)network_forward(net, x, &hook);
  }

  std::string norms = "block,branch1_l2,branch2_l2,branch3_l2,branch4_l2\n";
  for (size_t k = 0; k < records.size(); ++k) {
    const ScanRecord& rec = records[k];
    const std::string base = out_dir + "/block" + std::to_string(k);

    if (!rec.uncertainty.values.empty()) {
      const auto [lo_it, hi_it] =
          std::minmax_element(rec.uncertainty.values.begin(), rec.uncertainty.values.end());
      const double lo = *lo_it, hi = *hi_it;
      GrayImage pgm;
      pgm.h = rec.uncertainty.h;
      pgm.w = rec.uncertainty.w;
      pgm.pix.resize(rec.uncertainty.values.size());
      std::string csv = "row,col,value\n";
      for (int64_t r = 0; r < pgm.h; ++r) {
        for (int64_t c = 0; c < pgm.w; ++c) {
          const double v = rec.uncertainty.values[static_cast<size_t>(r * pgm.w + c)];
          // A constant map normalizes to all zeros.
          const double unit = hi > lo ? (v - lo) / (hi - lo) : 0.0;
          pgm.pix[static_cast<size_t>(r * pgm.w + c)] =
              static_cast<uint8_t>(std::lround(unit * 255.0));
          csv += std::to_string(r) + ',' + std::to_string(c) + ',' + fmt_g17(v) + '\n';
        }
      }
      write_pgm(base + "_uncertainty.pgm", pgm);
      write_text_file(base + "_uncertainty.csv", csv);
    }

    for (int b = 0; b < 4; ++b) {
      std::string csv = "pixel_index\n";
      for (int64_t v : rec.orders.p[static_cast<size_t>(b)]) {
        csv += std::to_string(v);
        csv += '\n';
      }
      write_text_file(base + "_p" + std::to_string(b + 1) + ".csv", csv);
    }

    norms += std::to_string(k);
    for (int b = 0; b < 4; ++b) {
      norms += ',' + fmt_g17(rec.branch_l2[static_cast<size_t>(b)]);
    }
    norms += '\n';
  }
  write_text_file(out_dir + "/branch_norms.csv", norms);
}

}  // namespace udm
