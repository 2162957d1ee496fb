#pragma once

#include <map>
#include <string>
#include <vector>

#include "asymprune/generation.hpp"
#include "asymprune/pruning.hpp"

namespace asymprune {

// A fixed benchmark workload: same inputs for every model under comparison.
// An optional forced EOS schedule pins per-sequence generation lengths so
// straggler behavior is reproducible.
struct Workload {
  std::vector<std::vector<int>> inputs;
  std::vector<int> forced_eos;  // empty = natural stopping
  GenerationConfig gen;
  std::string tag;
};

struct LatencyReport {
  int batch_size = 1;
  int runs = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double encoder_share = 0.0;
  double decoder_share = 0.0;
  double mean_steps = 0.0;  // decoder steps per batch, averaged over batches
  std::string workload_tag;
};

// Wall-clock timing of full-workload generation: one warm-up pass is
// discarded, then `runs` timed passes. Single-threaded compute; per-phase
// shares come from the generation traces.
LatencyReport measure(const ModelWeights& weights, const Workload& workload,
                      int batch_size, int runs = 7);

// baseline.mean_ms / candidate.mean_ms; both reports must come from the
// same workload and batch size.
double speedup(const LatencyReport& baseline, const LatencyReport& candidate);

struct CostMeasurement {
  int l_enc = 0;
  int l_dec = 0;
  double steps = 0.0;  // decoder steps per batch
  int batch_size = 1;
  double mean_ms = 0.0;
};

struct CostCoefficients {
  double alpha = 0.0;     // fixed overhead, ms
  double beta_enc = 0.0;  // ms per encoder layer
  double beta_dec = 0.0;  // ms per decoder layer per generation step
  double r2 = 0.0;
  double resid_corr_enc = 0.0;  // correlation of residuals with l_enc
  double resid_corr_dec = 0.0;
  int n_points = 0;
};

// Per-batch-size linear latency model mean_ms ~ alpha + beta_enc*l_enc +
// beta_dec*l_dec*steps, fitted by least squares via the normal equations.
struct CostModel {
  std::map<int, CostCoefficients> per_batch_size;
};

// Requires >= 4 distinct (l_enc, l_dec) points per batch size; throws on a
// rank-deficient design matrix.
CostModel fit_cost_model(const std::vector<CostMeasurement>& measurements);

double predict_latency(const CostModel& model, int batch_size, double l_enc,
                       double l_dec, double steps);

double predict_speedup(const CostModel& model, const PruneSpec& baseline,
                       const PruneSpec& candidate, double steps, int batch_size = 1);

}  // namespace asymprune
