#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asymprune/bench.hpp"
#include "asymprune/corpus.hpp"
#include "asymprune/generation.hpp"
#include "asymprune/model.hpp"
#include "asymprune/pruning.hpp"
#include "asymprune/rouge.hpp"

namespace asymprune {

struct Hyperparams {
  int effective_batch = 64;  // reached via gradient accumulation
  int micro_batch = 8;
  double lr = 1e-4;  // constant schedule
  double weight_decay = 0.01;
  int epochs = 10;
  int patience = 2;  // early stop after this many non-improving validations
  uint64_t seed = 1;

  void validate() const;
};

struct TrainCurvePoint {
  int step = 0;
  double loss = 0.0;
  bool operator==(const TrainCurvePoint&) const = default;
};

struct TrainResult {
  std::vector<TrainCurvePoint> curve;  // loss per optimizer (accumulated) step
  double best_valid_loss = 0.0;
  int epochs_run = 0;
  int optimizer_steps = 0;
};

// Teacher-forced cross-entropy training with gradient accumulation up to
// the effective batch. Deterministic per (weights, corpus, hyper). Stops
// early when validation loss fails to improve `patience` times; the weights
// left in place are the best-validation snapshot.
TrainResult train(ModelWeights& weights, const Corpus& corpus, const Hyperparams& hyper);

// Mean teacher-forced loss over a split.
double teacher_forced_loss(const ModelWeights& weights, const std::vector<Pair>& pairs,
                           int micro_batch = 8);

// Fraction of non-pad target tokens predicted correctly under teacher
// forcing.
double token_accuracy(const ModelWeights& weights, const std::vector<Pair>& pairs,
                      int micro_batch = 8);

// Greedy generation over `pairs`, mean per-pair ROUGE against references.
RougeScores evaluate_rouge(const ModelWeights& weights, const std::vector<Pair>& pairs,
                           const GenerationConfig& gen, int eval_batch = 8);

struct ExperimentRecord {
  std::string scale_tag;
  PruneSpec spec;
  RougeScores scores;
  Comparison cmp;  // R-2 F1 recall vs baseline; speedup at batch size 1
  std::vector<LatencyReport> latency;  // one per benchmark batch size
  std::vector<double> speedups;        // vs baseline, parallel to `latency`
  std::vector<TrainCurvePoint> curve;  // fine-tune curve (empty for baseline)
};

// JSON serialization; reload is bit-identical.
void save_record(const ExperimentRecord& rec, const std::string& path);
ExperimentRecord load_record(const std::string& path);
std::vector<ExperimentRecord> load_records_dir(const std::string& dir);

struct ScaleConfig {
  std::string tag;
  ModelConfig config;
};

struct BenchPlan {
  std::vector<int> batch_sizes = {1, 8, 16};
  int runs = 7;
  int pairs = 32;  // benchmark slice size
};

// Experiment configuration, parsed from a key = value file (see README for
// the key set).
struct RunConfig {
  std::string task = "leadk";  // synthetic task name or "tsv"
  std::string corpus_path;     // for task = tsv
  SynthSpec synth;
  std::vector<ScaleConfig> scales;
  Hyperparams hyper;
  Hyperparams finetune;  // fine-tune stage budget
  int eval_pairs = 64;
  int eval_batch = 8;
  int max_new_tokens = 32;
  BenchPlan bench;
  bool grid = true;
};

RunConfig parse_run_config(const std::string& path);
Corpus build_corpus(const RunConfig& rc);

// Deterministic benchmark workload drawn from the test split: a fixed
// slice, reordered long/short interleaved so batches carry a length spread.
Workload make_bench_workload(const Corpus& corpus, const RunConfig& rc,
                             const std::string& tag);

// Prune -> fine-tune -> ROUGE on test -> latency -> record.
ExperimentRecord shrink_then_finetune(const ModelWeights& baseline,
                                      const RougeScores& baseline_scores,
                                      const std::vector<LatencyReport>& baseline_latency,
                                      const PruneSpec& spec, const Corpus& corpus,
                                      const Hyperparams& finetune_hyper,
                                      const RunConfig& rc, const Workload& bench_workload,
                                      const std::string& scale_tag);

// Full grid per scale: one baseline training run feeds all pruned variants.
// Fine-tuning of variants may run on ASYMPRUNE_THREADS workers; all
// benchmark measurements run exclusively afterwards. Writes records,
// checkpoints and the report bundle under out_dir when non-empty.
std::vector<ExperimentRecord> run_grid(const RunConfig& rc, const Corpus& corpus,
                                       const std::string& out_dir);

struct ScalePoint {
  std::string tag;
  long long params = 0;
  double r2_f1 = 0.0;
  double gain_pct = 0.0;  // 100 * (score / smallest - 1)
};

// Trains each scale and reports relative R-2 gain versus the smallest
// model. Configs must be ordered by parameter count.
std::vector<ScalePoint> run_scale_sweep(const RunConfig& rc, const Corpus& corpus,
                                        const std::string& out_dir);

int worker_threads_from_env();

}  // namespace asymprune
