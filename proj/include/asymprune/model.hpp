#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asymprune/ops.hpp"
#include "asymprune/optim.hpp"
#include "asymprune/tensor.hpp"

namespace asymprune {

// T5-style encoder-decoder: pre-norm residual blocks, RMS norm without
// biases, shared relative-position bias per stack (table held by layer 0),
// per-head dimension decoupled from d_model.
struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int d_kv = 16;
  int d_ff = 128;
  int n_enc_layers = 6;
  int n_dec_layers = 6;
  int vocab_size = 64;
  int rel_pos_buckets = 32;
  int rel_pos_max_distance = 128;
  bool tie_embeddings = true;
  // Three-matrix gated feed-forward (the FLAN-T5 layout). Off by default:
  // experiments here use the two-matrix ReLU block.
  bool gated_ff = false;
  int max_input_len = 1024;
  double norm_eps = 1e-6;

  int inner() const { return n_heads * d_kv; }
  void validate() const;  // throws naming the offending field
  bool operator==(const ModelConfig&) const = default;
};

enum class StackPart { Encoder, Decoder, Embedding, Head };

struct AttentionWeights {
  Tensor wq, wk, wv, wo;  // [d,inner] x3, [inner,d]
};

struct LayerWeights {
  Tensor norm_self;
  AttentionWeights self_attn;
  bool has_cross = false;
  Tensor norm_cross;
  AttentionWeights cross_attn;
  Tensor norm_ff;
  Tensor ff_in, ff_gate, ff_out;  // ff_gate defined only for gated_ff
};

struct StackWeights {
  std::vector<LayerWeights> layers;
  Tensor rel_bias_table;  // [buckets, heads]; attached to layer 0, shared by the stack
  Tensor final_norm;
};

struct ModelWeights {
  ModelConfig config;
  Tensor embedding;  // [vocab, d_model]
  StackWeights encoder;
  StackWeights decoder;
  Tensor lm_head;  // [d_model, vocab]; undefined when tied

  // Fixed traversal order; also the initialization draw order and the
  // checkpoint tensor order.
  void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit_params(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::vector<Param> parameters();
  ModelWeights deep_copy() const;
};

// Deterministic init for (config, seed): projections and bias tables are
// normal with std 1/sqrt(d_model), the embedding is unit normal, norm gains
// are exactly 1. Tensors are filled row-major in visit_params order.
ModelWeights init_model(const ModelConfig& config, uint64_t seed);

long long count_params(const ModelConfig& config, StackPart part);
long long count_params(const ModelWeights& weights, StackPart part);
long long count_params_total(const ModelWeights& weights);

// Canonical T5 bucketing: an exact region for small distances, a
// logarithmic region up to max_distance, clamped to the last bucket beyond.
// `relative_position` is key_pos - query_pos; bidirectional splits buckets
// by sign, unidirectional folds the future onto bucket 0.
int relative_position_bucket(long long relative_position, bool bidirectional,
                             int num_buckets, int max_distance);

struct EncodedBatch {
  Tensor hidden;              // [B, T, d_model]
  std::vector<uint8_t> mask;  // [B*T], 1 = real token
  int batch = 0;
  int len = 0;
};

// One full encoder pass over a padded batch. Padded positions are masked
// out of attention.
EncodedBatch encode(const ModelWeights& w, const std::vector<std::vector<int>>& token_ids,
                    Tape* tape = nullptr);

// Teacher-forced decoder pass; returns logits [B, T, vocab].
Tensor decoder_forward(const ModelWeights& w, const EncodedBatch& enc,
                       const std::vector<std::vector<int>>& decoder_input_ids,
                       Tape* tape = nullptr);

struct DecodeCache {
  int batch = 0;
  int step = 0;      // tokens written so far
  int capacity = 0;  // preallocated steps
  std::vector<Tensor> self_k, self_v;    // per layer [B*H, cap, d_kv]
  std::vector<Tensor> cross_k, cross_v;  // per layer [B*H, S, d_kv]
  std::vector<uint8_t> src_mask;         // [B*S]
  int src_len = 0;
};

DecodeCache init_decode_cache(const ModelWeights& w, const EncodedBatch& enc,
                              int max_steps);

// One incremental decoding step with KV caching; returns logits [B, vocab]
// and advances the cache.
Tensor decode_step(const ModelWeights& w, DecodeCache& cache,
                   const std::vector<int>& new_tokens);

const char* stack_part_name(StackPart part);

}  // namespace asymprune
