#pragma once

#include <vector>

#include "asymprune/model.hpp"

namespace asymprune {

struct GenerationConfig {
  int max_input_len = 1024;
  int max_new_tokens = 256;
  int eos_id = 1;
  int pad_id = 0;
  int bos_id = 2;
  bool capture_logits = false;  // keep per-step logits (tests)

  void validate() const;
};

struct GenerationTrace {
  double encoder_ms = 0.0;
  std::vector<double> decoder_step_ms;  // one entry per executed step
  std::vector<int> genl;                // per sequence, includes the EOS token
  int steps_total = 0;
};

struct GenerationResult {
  // Raw emission matrix: one token per executed step per sequence; finished
  // sequences emit pad after their EOS.
  std::vector<std::vector<int>> tokens;
  GenerationTrace trace;
  std::vector<Tensor> step_logits;  // only when capture_logits
};

// Batched greedy decoding with KV caching. The batch runs until every
// sequence has produced EOS or max_new_tokens is reached; finished
// sequences keep their batch slot and keep computing (masked writes).
// `forced_eos`, when given, pins each sequence's generation length: full
// per-step compute is unchanged, only the emitted token choice is
// overridden (EOS exactly at the scheduled step). Used by tests and by
// straggler benchmark workloads.
GenerationResult generate(const ModelWeights& weights,
                          const std::vector<std::vector<int>>& inputs,
                          const GenerationConfig& cfg,
                          const std::vector<int>* forced_eos = nullptr);

// Cache-free oracle: recomputes the full teacher-forced decoder pass for
// every step. Must match generate() token-for-token.
GenerationResult generate_uncached(const ModelWeights& weights,
                                   const std::vector<std::vector<int>>& inputs,
                                   const GenerationConfig& cfg,
                                   const std::vector<int>* forced_eos = nullptr);

// Content tokens of one generated sequence: everything before the first
// EOS, with pads dropped.
std::vector<int> strip_generation(const std::vector<int>& emitted,
                                  const GenerationConfig& cfg);

double mean_genl(const std::vector<GenerationTrace>& traces);

}  // namespace asymprune
