#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "network.hpp"

namespace udm {

// Metrics of one class averaged over the evaluated samples. hd95_mean covers
// only samples with a finite boundary distance (it is +inf when there are
// none); hd95_inf counts the samples where either mask was empty.
struct EvalClassRow {
  int cls = 0;
  double dsc = 0;
  double iou = 0;
  double acc = 0;
  double sen = 0;
  double spe = 0;
  double hd95_mean = 0;
  int64_t hd95_inf = 0;
};

struct EvalReport {
  int64_t num_samples = 0;
  std::vector<EvalClassRow> per_class;  // one row per class id, 0..K-1
  // Mean of the foreground rows (class ids 1..K-1); hd95_inf is their sum.
  // Meaningless (and omitted from serializations) when num_samples == 0.
  EvalClassRow macro;

  // Headline score: macro DSC, or -1 when nothing was evaluated.
  double headline_dsc() const { return num_samples > 0 ? macro.dsc : -1.0; }
};

// Hard-prediction metrics over the given dataset samples. `threads` only fans
// out the forward passes; results are reduced in index order, so the report
// is bit-identical for any thread count.
EvalReport evaluate_split(const Network& net, const Dataset& ds,
                          const std::vector<int64_t>& indices, int64_t threads);

std::string eval_report_csv(const EvalReport& rep);
nlohmann::json eval_report_json(const EvalReport& rep);

struct TrainResult {
  int64_t steps = 0;
  int64_t epochs = 0;
  std::vector<double> step_total;  // total training loss per executed step
  double best_val_dsc = -1.0;      // -1 when the validation split is empty
  double final_val_dsc = -1.0;
  double final_train_dsc = -1.0;
  std::string best_checkpoint;
  std::string final_checkpoint;
};

// Full run: load (or synthesize) the dataset, train with SGD + momentum and
// milestone learning-rate decay, and leave logs, checkpoints, and a summary
// under cfg.out_dir:
//   train_log.csv    epoch,steps,lr,train_sup,train_cos,train_total,val_dsc
//   alpha_trace.csv  alpha1..alpha4, one row per epoch
//   checkpoint_best.udc / checkpoint_final.udc, summary.json
// Log files are opened in append mode and only ever gain rows; the header is
// written when the file starts empty. Identical (config, seed) with
// threads=1 reproduces every artifact bit for bit. A non-finite loss raises
// NumericError.
TrainResult train_run(const RunConfig& cfg);

struct BenchRow {
  int64_t length = 0;
  double sequential_ns = 0;
  double parallel_ns = 0;
};

// Best-of-three wall times of a single forward scan per kernel and length.
std::vector<BenchRow> bench_scan(const std::vector<int64_t>& lengths, int64_t channels,
                                 int64_t state_dim, uint64_t seed);

std::string bench_csv(const std::vector<BenchRow>& rows);

// Runs one image through the network and dumps every block's ranking
// artifacts into out_dir: block{k}_uncertainty.pgm (min-max normalized,
// all-zero when the map is constant) and block{k}_uncertainty.csv
// (row,col,value) when uncertainty ranking is active, block{k}_p{1..4}.csv
// traversal orders, and a pooled branch_norms.csv.
void inspect_to_dir(const Network& net, const GrayImage& image, const std::string& out_dir);

}  // namespace udm
