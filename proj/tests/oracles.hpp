// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asymprune/model.hpp"
#include "asymprune/rng.hpp"
#include "asymprune/tensor.hpp"

namespace oracles {

using asymprune::ModelConfig;
using asymprune::Rng;
using asymprune::Tape;
using asymprune::Tensor;

// Central finite differences against the tape gradients. `forward` must be
// a pure function of the current parameter values; it receives a tape only
// for the analytic pass.
struct GradCheckResult {
  double max_rel_err = 0.0;
  long long checked = 0;
  std::string worst_param;
};

inline GradCheckResult gradcheck(std::vector<asymprune::Param> params,
                                 const std::function<Tensor(Tape*)>& forward,
                                 double h = 1e-5, long long max_per_tensor = -1) {
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  Tape tape;
  Tensor loss = forward(&tape);
  asymprune::backward(tape, loss);

  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.tensor.grad());

  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<double>& x = params[pi].tensor.data();
    const long long n = static_cast<long long>(x.size());
    const long long limit = max_per_tensor > 0 ? std::min(n, max_per_tensor) : n;
    const long long stride = n / limit > 0 ? n / limit : 1;
    for (long long j = 0; j < n; j += stride) {
      const double orig = x[static_cast<size_t>(j)];
      x[static_cast<size_t>(j)] = orig + h;
      const double fp = forward(nullptr).data()[0];
      x[static_cast<size_t>(j)] = orig - h;
      const double fm = forward(nullptr).data()[0];
      x[static_cast<size_t>(j)] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][static_cast<size_t>(j)];
      const double rel = std::fabs(a - numeric) / std::max(1e-2, std::fabs(a) + std::fabs(numeric));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[pi].name;
      }
      ++res.checked;
    }
  }
  return res;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.next_gaussian();
  return t;
}

// Direct-summation cross entropy: mean over non-ignored rows of
// log(sum_j exp(z_j)) - z_target, with the naive exponential sum.
inline double cross_entropy_direct(const Tensor& logits, const std::vector<int>& targets,
                                   int ignore_index) {
  const int vocab = logits.dim(logits.ndim() - 1);
  const long long rows = logits.size() / vocab;
  double total = 0.0;
  long long valid = 0;
  for (long long r = 0; r < rows; ++r) {
    const int t = targets[static_cast<size_t>(r)];
    if (t == ignore_index) continue;
    const double* z = logits.raw() + r * vocab;
    double sum = 0.0;
    for (int i = 0; i < vocab; ++i) sum += std::exp(z[i]);
    total += std::log(sum) - z[t];
    ++valid;
  }
  return total / static_cast<double>(valid);
}

// Expected tensor shapes for a config, enumerated directly from the
// declared architecture (deliberately re-stated here, not derived from
// visit_params).
inline std::vector<std::pair<std::string, std::vector<int>>> expected_tensor_shapes(
    const ModelConfig& c) {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  const int d = c.d_model, inner = c.n_heads * c.d_kv, dff = c.d_ff;
  out.push_back({"embedding", {c.vocab_size, d}});
  auto layer = [&](const std::string& p, bool cross) {
    out.push_back({p + ".norm_self", {d}});
    out.push_back({p + ".self.wq", {d, inner}});
    out.push_back({p + ".self.wk", {d, inner}});
    out.push_back({p + ".self.wv", {d, inner}});
    out.push_back({p + ".self.wo", {inner, d}});
    if (cross) {
      out.push_back({p + ".norm_cross", {d}});
      out.push_back({p + ".cross.wq", {d, inner}});
      out.push_back({p + ".cross.wk", {d, inner}});
      out.push_back({p + ".cross.wv", {d, inner}});
      out.push_back({p + ".cross.wo", {inner, d}});
    }
    out.push_back({p + ".norm_ff", {d}});
    out.push_back({p + ".ff_in", {d, dff}});
    if (c.gated_ff) out.push_back({p + ".ff_gate", {d, dff}});
    out.push_back({p + ".ff_out", {dff, d}});
  };
  for (int i = 0; i < c.n_enc_layers; ++i)
    layer("encoder.layer" + std::to_string(i), false);
  out.push_back({"encoder.rel_bias_table", {c.rel_pos_buckets, c.n_heads}});
  out.push_back({"encoder.final_norm", {d}});
  for (int i = 0; i < c.n_dec_layers; ++i)
    layer("decoder.layer" + std::to_string(i), true);
  out.push_back({"decoder.rel_bias_table", {c.rel_pos_buckets, c.n_heads}});
  out.push_back({"decoder.final_norm", {d}});
  if (!c.tie_embeddings) out.push_back({"lm_head", {d, c.vocab_size}});
  return out;
}

inline long long expected_total_params(const ModelConfig& c) {
  long long total = 0;
  for (const auto& [name, shape] : expected_tensor_shapes(c)) {
    long long n = 1;
    for (int dim : shape) n *= dim;
    total += n;
  }
  return total;
}

inline long long expected_part_params(const ModelConfig& c, const std::string& prefix) {
  long long total = 0;
  for (const auto& [name, shape] : expected_tensor_shapes(c)) {
    if (name.rfind(prefix, 0) != 0) continue;
    long long n = 1;
    for (int dim : shape) n *= dim;
    total += n;
  }
  return total;
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_kv = 4;
  c.d_ff = 16;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.vocab_size = 16;
  c.rel_pos_buckets = 8;
  c.rel_pos_max_distance = 16;
  return c;
}

}  // namespace oracles
