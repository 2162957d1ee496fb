#include "asymprune/generation.hpp"

#include <chrono>
#include <stdexcept>

#include "asymprune/ops.hpp"

namespace asymprune {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void validate_inputs(const std::vector<std::vector<int>>& inputs,
                     const GenerationConfig& cfg,
                     const std::vector<int>* forced_eos) {
  cfg.validate();
  if (inputs.empty()) throw std::invalid_argument("generate: empty batch");
  for (const auto& seq : inputs)
    if (static_cast<int>(seq.size()) > cfg.max_input_len)
      throw std::invalid_argument("generate: input length " +
                                  std::to_string(seq.size()) + " exceeds max input " +
                                  std::to_string(cfg.max_input_len));
  if (forced_eos && forced_eos->size() != inputs.size())
    throw std::invalid_argument("generate: forced EOS schedule size mismatch");
}

// Shared decision logic: pick each sequence's emitted token for this step.
// step is zero-based; a forced schedule of s means EOS is emitted at step
// s-1 (generation length s).
int choose_token(int argmax_token, int step, int seq, const GenerationConfig& cfg,
                 const std::vector<int>* forced_eos) {
  if (!forced_eos) return argmax_token;
  const int target = (*forced_eos)[static_cast<size_t>(seq)];
  if (step + 1 >= target) return cfg.eos_id;
  return argmax_token == cfg.eos_id ? cfg.bos_id : argmax_token;
}

}  // namespace

void GenerationConfig::validate() const {
  if (max_new_tokens < 1)
    throw std::invalid_argument("generation config: max_new_tokens must be >= 1");
  if (eos_id == pad_id)
    throw std::invalid_argument("generation config: eos_id must differ from pad_id");
  if (max_input_len < 1)
    throw std::invalid_argument("generation config: max_input_len must be >= 1");
}

GenerationResult generate(const ModelWeights& weights,
                          const std::vector<std::vector<int>>& inputs,
                          const GenerationConfig& cfg,
                          const std::vector<int>* forced_eos) {
  validate_inputs(inputs, cfg, forced_eos);
  const int B = static_cast<int>(inputs.size());

  GenerationResult res;
  res.tokens.assign(static_cast<size_t>(B), {});
  res.trace.genl.assign(static_cast<size_t>(B), 0);

  auto t0 = Clock::now();
  EncodedBatch enc = encode(weights, inputs, nullptr);
  auto t1 = Clock::now();
  res.trace.encoder_ms = ms_between(t0, t1);

  DecodeCache cache = init_decode_cache(weights, enc, cfg.max_new_tokens);
  std::vector<int> current(static_cast<size_t>(B), cfg.bos_id);
  std::vector<uint8_t> finished(static_cast<size_t>(B), 0);
  int n_finished = 0;

  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    auto ts = Clock::now();
    Tensor logits = decode_step(weights, cache, current);
    auto te = Clock::now();
    res.trace.decoder_step_ms.push_back(ms_between(ts, te));
    if (cfg.capture_logits) res.step_logits.push_back(logits);

    const std::vector<int> top = argmax_lastdim(logits);
    for (int b = 0; b < B; ++b) {
      int token;
      if (finished[static_cast<size_t>(b)]) {
        token = cfg.pad_id;
      } else {
        token = choose_token(top[static_cast<size_t>(b)], step, b, cfg, forced_eos);
        if (token == cfg.eos_id) {
          finished[static_cast<size_t>(b)] = 1;
          res.trace.genl[static_cast<size_t>(b)] = step + 1;
          ++n_finished;
        }
      }
      res.tokens[static_cast<size_t>(b)].push_back(token);
      current[static_cast<size_t>(b)] = token;
    }
    if (n_finished == B) break;
  }
  res.trace.steps_total = static_cast<int>(res.trace.decoder_step_ms.size());
  for (int b = 0; b < B; ++b)
    if (!finished[static_cast<size_t>(b)])
      res.trace.genl[static_cast<size_t>(b)] = res.trace.steps_total;
  return res;
}

GenerationResult generate_uncached(const ModelWeights& weights,
                                   const std::vector<std::vector<int>>& inputs,
                                   const GenerationConfig& cfg,
                                   const std::vector<int>* forced_eos) {
  validate_inputs(inputs, cfg, forced_eos);
  const int B = static_cast<int>(inputs.size());

  GenerationResult res;
  res.tokens.assign(static_cast<size_t>(B), {});
  res.trace.genl.assign(static_cast<size_t>(B), 0);

  auto t0 = Clock::now();
  EncodedBatch enc = encode(weights, inputs, nullptr);
  auto t1 = Clock::now();
  res.trace.encoder_ms = ms_between(t0, t1);

  std::vector<std::vector<int>> prefix(static_cast<size_t>(B),
                                       std::vector<int>{cfg.bos_id});
  std::vector<uint8_t> finished(static_cast<size_t>(B), 0);
  int n_finished = 0;

  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    auto ts = Clock::now();
    Tensor all_logits = decoder_forward(weights, enc, prefix);  // [B, step+1, vocab]
    auto te = Clock::now();
    res.trace.decoder_step_ms.push_back(ms_between(ts, te));

    // Last position only.
    const int T = all_logits.dim(1), V = all_logits.dim(2);
    Tensor logits({B, V});
    for (int b = 0; b < B; ++b)
      std::copy(all_logits.raw() + (static_cast<long long>(b) * T + (T - 1)) * V,
                all_logits.raw() + (static_cast<long long>(b) * T + T) * V,
                logits.raw() + static_cast<long long>(b) * V);
    if (cfg.capture_logits) res.step_logits.push_back(logits);

    const std::vector<int> top = argmax_lastdim(logits);
    for (int b = 0; b < B; ++b) {
      int token;
      if (finished[static_cast<size_t>(b)]) {
        token = cfg.pad_id;
      } else {
        token = choose_token(top[static_cast<size_t>(b)], step, b, cfg, forced_eos);
        if (token == cfg.eos_id) {
          finished[static_cast<size_t>(b)] = 1;
          res.trace.genl[static_cast<size_t>(b)] = step + 1;
          ++n_finished;
        }
      }
      res.tokens[static_cast<size_t>(b)].push_back(token);
      prefix[static_cast<size_t>(b)].push_back(token);
    }
    if (n_finished == B) break;
  }
  res.trace.steps_total = static_cast<int>(res.trace.decoder_step_ms.size());
  for (int b = 0; b < B; ++b)
    if (!finished[static_cast<size_t>(b)])
      res.trace.genl[static_cast<size_t>(b)] = res.trace.steps_total;
  return res;
}

std::vector<int> strip_generation(const std::vector<int>& emitted,
                                  const GenerationConfig& cfg) {
  std::vector<int> out;
  for (int t : emitted) {
    if (t == cfg.eos_id) break;
    if (t != cfg.pad_id) out.push_back(t);
  }
  return out;
}

double mean_genl(const std::vector<GenerationTrace>& traces) {
  long long n = 0;
  double sum = 0.0;
  for (const auto& tr : traces)
    for (int g : tr.genl) {
      sum += g;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("mean_genl: no generation lengths");
  return sum / static_cast<double>(n);
}

}  // namespace asymprune
