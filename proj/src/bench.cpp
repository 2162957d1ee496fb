#include "asymprune/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

namespace asymprune {

namespace {

using Clock = std::chrono::steady_clock;

struct PassResult {
  double wall_ms = 0.0;
  double enc_ms = 0.0;
  double dec_ms = 0.0;
  double steps = 0.0;  // total decoder steps over all batches
  int batches = 0;
};

PassResult run_workload(const ModelWeights& weights, const Workload& wl,
                        int batch_size) {
  PassResult pass;
  const size_t n = wl.inputs.size();
  auto t0 = Clock::now();
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
    std::vector<std::vector<int>> batch(wl.inputs.begin() + static_cast<long>(start),
                                        wl.inputs.begin() + static_cast<long>(end));
    std::vector<int> forced;
    const std::vector<int>* forced_ptr = nullptr;
    if (!wl.forced_eos.empty()) {
      forced.assign(wl.forced_eos.begin() + static_cast<long>(start),
                    wl.forced_eos.begin() + static_cast<long>(end));
      forced_ptr = &forced;
    }
    GenerationResult res = generate(weights, batch, wl.gen, forced_ptr);
    pass.enc_ms += res.trace.encoder_ms;
    for (double d : res.trace.decoder_step_ms) pass.dec_ms += d;
    pass.steps += res.trace.steps_total;
    ++pass.batches;
  }
  pass.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  return pass;
}

}  // namespace

LatencyReport measure(const ModelWeights& weights, const Workload& workload,
                      int batch_size, int runs) {
  if (workload.inputs.empty()) throw std::invalid_argument("measure: empty workload");
  if (batch_size < 1) throw std::invalid_argument("measure: batch_size must be >= 1");
  if (runs < 2) throw std::invalid_argument("measure: need at least 2 runs");
  if (!workload.forced_eos.empty() &&
      workload.forced_eos.size() != workload.inputs.size())
    throw std::invalid_argument("measure: forced EOS schedule size mismatch");

  run_workload(weights, workload, batch_size);  // warm-up, discarded

  std::vector<double> times;
  double enc_total = 0.0, dec_total = 0.0, wall_total = 0.0, steps_total = 0.0;
  int batches = 0;
  for (int r = 0; r < runs; ++r) {
    PassResult pass = run_workload(weights, workload, batch_size);
    times.push_back(pass.wall_ms);
    enc_total += pass.enc_ms;
    dec_total += pass.dec_ms;
    wall_total += pass.wall_ms;
    steps_total += pass.steps;
    batches += pass.batches;
  }

  LatencyReport rep;
  rep.batch_size = batch_size;
  rep.runs = runs;
  double mean = 0.0;
  for (double t : times) mean += t;
  mean /= static_cast<double>(runs);
  double var = 0.0;
  for (double t : times) var += (t - mean) * (t - mean);
  rep.mean_ms = mean;
  rep.std_ms = runs > 1 ? std::sqrt(var / static_cast<double>(runs - 1)) : 0.0;
  rep.encoder_share = wall_total > 0 ? enc_total / wall_total : 0.0;
  rep.decoder_share = wall_total > 0 ? dec_total / wall_total : 0.0;
  rep.mean_steps = batches > 0 ? steps_total / batches : 0.0;
  rep.workload_tag = workload.tag;
  return rep;
}

double speedup(const LatencyReport& baseline, const LatencyReport& candidate) {
  if (baseline.workload_tag != candidate.workload_tag ||
      baseline.batch_size != candidate.batch_size)
    throw std::invalid_argument("speedup: mismatched workloads ('" +
                                baseline.workload_tag + "' bs " +
                                std::to_string(baseline.batch_size) + " vs '" +
                                candidate.workload_tag + "' bs " +
                                std::to_string(candidate.batch_size) + ")");
  if (candidate.mean_ms <= 0.0)
    throw std::invalid_argument("speedup: candidate mean latency is not positive");
  return baseline.mean_ms / candidate.mean_ms;
}

namespace {

// Solves the 3x3 system A w = b by Gaussian elimination with partial
// pivoting; throws if the system is (near) singular.
std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> A,
                             std::array<double, 3> b) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
    if (std::fabs(A[piv][col]) < 1e-12)
      throw std::runtime_error("fit_cost_model: rank-deficient design matrix");
    std::swap(A[col], A[piv]);
    std::swap(b[col], b[piv]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = A[r][col] / A[col][col];
      for (int c = col; c < 3; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  return {b[0] / A[0][0], b[1] / A[1][1], b[2] / A[2][2]};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

CostModel fit_cost_model(const std::vector<CostMeasurement>& measurements) {
  std::map<int, std::vector<CostMeasurement>> by_bs;
  for (const auto& m : measurements) by_bs[m.batch_size].push_back(m);
  if (by_bs.empty()) throw std::invalid_argument("fit_cost_model: no measurements");

  CostModel model;
  for (auto& [bs, ms] : by_bs) {
    std::set<std::pair<int, int>> distinct;
    for (const auto& m : ms) distinct.insert({m.l_enc, m.l_dec});
    if (distinct.size() < 4)
      throw std::invalid_argument(
          "fit_cost_model: need >= 4 distinct (l_enc, l_dec) points for batch size " +
          std::to_string(bs));

    std::array<std::array<double, 3>, 3> xtx{};
    std::array<double, 3> xty{};
    for (const auto& m : ms) {
      const double row[3] = {1.0, static_cast<double>(m.l_enc), m.l_dec * m.steps};
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) xtx[i][j] += row[i] * row[j];
        xty[i] += row[i] * m.mean_ms;
      }
    }
    const auto w = solve3(xtx, xty);

    CostCoefficients coef;
    coef.alpha = w[0];
    coef.beta_enc = w[1];
    coef.beta_dec = w[2];
    coef.n_points = static_cast<int>(ms.size());

    double mean_y = 0.0;
    for (const auto& m : ms) mean_y += m.mean_ms;
    mean_y /= static_cast<double>(ms.size());
    double ss_res = 0.0, ss_tot = 0.0;
    std::vector<double> resid, xs_enc, xs_dec;
    for (const auto& m : ms) {
      const double pred = coef.alpha + coef.beta_enc * m.l_enc + coef.beta_dec * m.l_dec * m.steps;
      const double r = m.mean_ms - pred;
      ss_res += r * r;
      ss_tot += (m.mean_ms - mean_y) * (m.mean_ms - mean_y);
      resid.push_back(r);
      xs_enc.push_back(m.l_enc);
      xs_dec.push_back(m.l_dec);
    }
    coef.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    coef.resid_corr_enc = pearson(resid, xs_enc);
    coef.resid_corr_dec = pearson(resid, xs_dec);
    model.per_batch_size[bs] = coef;
  }
  return model;
}

double predict_latency(const CostModel& model, int batch_size, double l_enc,
                       double l_dec, double steps) {
  auto it = model.per_batch_size.find(batch_size);
  if (it == model.per_batch_size.end())
    throw std::invalid_argument("cost model: no coefficients for batch size " +
                                std::to_string(batch_size));
  const CostCoefficients& c = it->second;
  return c.alpha + c.beta_enc * l_enc + c.beta_dec * l_dec * steps;
}

double predict_speedup(const CostModel& model, const PruneSpec& baseline,
                       const PruneSpec& candidate, double steps, int batch_size) {
  const double base = predict_latency(model, batch_size, baseline.enc_keep,
                                      baseline.dec_keep, steps);
  const double cand = predict_latency(model, batch_size, candidate.enc_keep,
                                      candidate.dec_keep, steps);
  return base / cand;
}

}  // namespace asymprune
