#include "asymprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "asymprune/rng.hpp"

namespace asymprune {

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config: field '" + field + "' " + why);
  };
  if (d_model < 1) fail("d_model", "must be >= 1");
  if (n_heads < 1) fail("n_heads", "must be >= 1");
  if (d_kv < 1) fail("d_kv", "must be >= 1");
  if (d_ff < 1) fail("d_ff", "must be >= 1");
  if (n_enc_layers < 1) fail("n_enc_layers", "must be >= 1");
  if (n_dec_layers < 1) fail("n_dec_layers", "must be >= 1");
  if (vocab_size < 4) fail("vocab_size", "must be >= 4 (pad, eos, bos, one symbol)");
  if (rel_pos_buckets < 2) fail("rel_pos_buckets", "must be >= 2");
  if (rel_pos_max_distance < rel_pos_buckets)
    fail("rel_pos_max_distance", "must be >= rel_pos_buckets");
  if (max_input_len < 1) fail("max_input_len", "must be >= 1");
  if (norm_eps <= 0.0) fail("norm_eps", "must be > 0");
}

const char* stack_part_name(StackPart part) {
  switch (part) {
    case StackPart::Encoder: return "encoder";
    case StackPart::Decoder: return "decoder";
    case StackPart::Embedding: return "embedding";
    case StackPart::Head: return "head";
  }
  return "?";
}

namespace {

void visit_attention(const std::string& prefix, AttentionWeights& aw,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".wq", aw.wq);
  fn(prefix + ".wk", aw.wk);
  fn(prefix + ".wv", aw.wv);
  fn(prefix + ".wo", aw.wo);
}

void visit_stack(const std::string& prefix, StackWeights& st,
                 const std::function<void(const std::string&, Tensor&)>& fn) {
  for (size_t i = 0; i < st.layers.size(); ++i) {
    LayerWeights& lw = st.layers[i];
    const std::string lp = prefix + ".layer" + std::to_string(i);
    fn(lp + ".norm_self", lw.norm_self);
    visit_attention(lp + ".self", lw.self_attn, fn);
    if (lw.has_cross) {
      fn(lp + ".norm_cross", lw.norm_cross);
      visit_attention(lp + ".cross", lw.cross_attn, fn);
    }
    fn(lp + ".norm_ff", lw.norm_ff);
    fn(lp + ".ff_in", lw.ff_in);
    if (lw.ff_gate.defined()) fn(lp + ".ff_gate", lw.ff_gate);
    fn(lp + ".ff_out", lw.ff_out);
  }
  fn(prefix + ".rel_bias_table", st.rel_bias_table);
  fn(prefix + ".final_norm", st.final_norm);
}

}  // namespace

void ModelWeights::visit_params(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("embedding", embedding);
  visit_stack("encoder", encoder, fn);
  visit_stack("decoder", decoder, fn);
  if (lm_head.defined()) fn("lm_head", lm_head);
}

void ModelWeights::visit_params(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelWeights*>(this)->visit_params(
      [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

std::vector<Param> ModelWeights::parameters() {
  std::vector<Param> out;
  visit_params([&out](const std::string& name, Tensor& t) { out.push_back({name, t}); });
  return out;
}

ModelWeights ModelWeights::deep_copy() const {
  ModelWeights w;
  w.config = config;
  w.embedding = embedding.deep_copy();
  auto copy_stack = [](const StackWeights& src) {
    StackWeights dst;
    dst.layers.reserve(src.layers.size());
    for (const LayerWeights& l : src.layers) {
      LayerWeights nl;
      nl.norm_self = l.norm_self.deep_copy();
      nl.self_attn = {l.self_attn.wq.deep_copy(), l.self_attn.wk.deep_copy(),
                      l.self_attn.wv.deep_copy(), l.self_attn.wo.deep_copy()};
      nl.has_cross = l.has_cross;
      if (l.has_cross) {
        nl.norm_cross = l.norm_cross.deep_copy();
        nl.cross_attn = {l.cross_attn.wq.deep_copy(), l.cross_attn.wk.deep_copy(),
                         l.cross_attn.wv.deep_copy(), l.cross_attn.wo.deep_copy()};
      }
      nl.norm_ff = l.norm_ff.deep_copy();
      nl.ff_in = l.ff_in.deep_copy();
      if (l.ff_gate.defined()) nl.ff_gate = l.ff_gate.deep_copy();
      nl.ff_out = l.ff_out.deep_copy();
      dst.layers.push_back(std::move(nl));
    }
    dst.rel_bias_table = src.rel_bias_table.deep_copy();
    dst.final_norm = src.final_norm.deep_copy();
    return dst;
  };
  w.encoder = copy_stack(encoder);
  w.decoder = copy_stack(decoder);
  if (lm_head.defined()) w.lm_head = lm_head.deep_copy();
  return w;
}

namespace {

Tensor gaussian_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = stddev * rng.next_gaussian();
  t.set_requires_grad(true);
  return t;
}

Tensor ones_tensor(int n) {
  Tensor t = Tensor::full({n}, 1.0);
  t.set_requires_grad(true);
  return t;
}

LayerWeights make_layer(const ModelConfig& cfg, bool cross, Rng& rng) {
  const double std_proj = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  const int d = cfg.d_model, inner = cfg.inner(), dff = cfg.d_ff;
  LayerWeights lw;
  lw.norm_self = ones_tensor(d);
  lw.self_attn = {gaussian_tensor({d, inner}, std_proj, rng),
                  gaussian_tensor({d, inner}, std_proj, rng),
                  gaussian_tensor({d, inner}, std_proj, rng),
                  gaussian_tensor({inner, d}, std_proj, rng)};
  lw.has_cross = cross;
  if (cross) {
    lw.norm_cross = ones_tensor(d);
    lw.cross_attn = {gaussian_tensor({d, inner}, std_proj, rng),
                     gaussian_tensor({d, inner}, std_proj, rng),
                     gaussian_tensor({d, inner}, std_proj, rng),
                     gaussian_tensor({inner, d}, std_proj, rng)};
  }
  lw.norm_ff = ones_tensor(d);
  lw.ff_in = gaussian_tensor({d, dff}, std_proj, rng);
  if (cfg.gated_ff) lw.ff_gate = gaussian_tensor({d, dff}, std_proj, rng);
  lw.ff_out = gaussian_tensor({dff, d}, std_proj, rng);
  return lw;
}

}  // namespace

ModelWeights init_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double std_proj = 1.0 / std::sqrt(static_cast<double>(config.d_model));

  ModelWeights w;
  w.config = config;
  w.embedding = gaussian_tensor({config.vocab_size, config.d_model}, 1.0, rng);

  for (int i = 0; i < config.n_enc_layers; ++i)
    w.encoder.layers.push_back(make_layer(config, false, rng));
  w.encoder.rel_bias_table =
      gaussian_tensor({config.rel_pos_buckets, config.n_heads}, std_proj, rng);
  w.encoder.final_norm = ones_tensor(config.d_model);

  for (int i = 0; i < config.n_dec_layers; ++i)
    w.decoder.layers.push_back(make_layer(config, true, rng));
  w.decoder.rel_bias_table =
      gaussian_tensor({config.rel_pos_buckets, config.n_heads}, std_proj, rng);
  w.decoder.final_norm = ones_tensor(config.d_model);

  if (!config.tie_embeddings)
    w.lm_head = gaussian_tensor({config.d_model, config.vocab_size}, std_proj, rng);
  return w;
}

long long count_params(const ModelConfig& cfg, StackPart part) {
  const long long d = cfg.d_model, inner = cfg.inner(), dff = cfg.d_ff;
  const long long attn = 4 * d * inner;
  const long long ff = (cfg.gated_ff ? 3 : 2) * d * dff;
  const long long stack_extra = static_cast<long long>(cfg.rel_pos_buckets) * cfg.n_heads + d;
  switch (part) {
    case StackPart::Encoder:
      return cfg.n_enc_layers * (attn + ff + 2 * d) + stack_extra;
    case StackPart::Decoder:
      return cfg.n_dec_layers * (2 * attn + ff + 3 * d) + stack_extra;
    case StackPart::Embedding:
      return static_cast<long long>(cfg.vocab_size) * d;
    case StackPart::Head:
      return cfg.tie_embeddings ? 0 : d * static_cast<long long>(cfg.vocab_size);
  }
  return 0;
}

long long count_params(const ModelWeights& weights, StackPart part) {
  long long total = 0;
  weights.visit_params([&](const std::string& name, const Tensor& t) {
    StackPart p;
    if (name.rfind("encoder.", 0) == 0)
      p = StackPart::Encoder;
    else if (name.rfind("decoder.", 0) == 0)
      p = StackPart::Decoder;
    else if (name == "embedding")
      p = StackPart::Embedding;
    else
      p = StackPart::Head;
    if (p == part) total += t.size();
  });
  return total;
}

long long count_params_total(const ModelWeights& weights) {
  long long total = 0;
  weights.visit_params(
      [&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

int relative_position_bucket(long long relative_position, bool bidirectional,
                             int num_buckets, int max_distance) {
  int bucket = 0;
  int nb = num_buckets;
  long long rel = relative_position;
  if (bidirectional) {
    nb /= 2;
    if (rel > 0) bucket += nb;
    rel = std::llabs(rel);
  } else {
    rel = rel < 0 ? -rel : 0;  // attend only backwards
  }
  const int max_exact = nb / 2;
  if (rel < max_exact) return bucket + static_cast<int>(rel);
  const double ratio = std::log(static_cast<double>(rel) / max_exact) /
                       std::log(static_cast<double>(max_distance) / max_exact);
  int large = max_exact + static_cast<int>(ratio * (nb - max_exact));
  return bucket + std::min(large, nb - 1);
}

namespace {

// [H, q_len, k_len] bias gathered from the stack table; shared by every
// layer of the stack. q_offset is the global position of query row 0.
Tensor build_rel_bias(const Tensor& table, const ModelConfig& cfg, int q_len, int k_len,
                      int q_offset, bool bidirectional, Tape* tape) {
  std::vector<int> ids(static_cast<size_t>(q_len) * k_len);
  size_t n = 0;
  for (int i = 0; i < q_len; ++i) {
    const long long qpos = i + q_offset;
    for (int j = 0; j < k_len; ++j)
      ids[n++] = relative_position_bucket(j - qpos, bidirectional, cfg.rel_pos_buckets,
                                          cfg.rel_pos_max_distance);
  }
  Tensor g = embedding(ids, table, tape);               // [q*k, H]
  Tensor g3 = reshape(g, {q_len, k_len, cfg.n_heads});  // [q, k, H]
  return transpose(g3, {2, 0, 1}, tape);                // [H, q, k]
}

// x [B,T,d] -> [B*H, T, d_kv]
Tensor project_heads(const Tensor& x, const Tensor& w, const ModelConfig& cfg,
                     Tape* tape) {
  const int B = x.dim(0), T = x.dim(1);
  Tensor flat = reshape(x, {B * T, cfg.d_model});
  Tensor p = matmul(flat, w, tape);
  Tensor p4 = reshape(p, {B, T, cfg.n_heads, cfg.d_kv});
  Tensor pt = transpose(p4, {0, 2, 1, 3}, tape);
  return reshape(pt, {B * cfg.n_heads, T, cfg.d_kv});
}

// [B*H, T, d_kv] -> [B, T, d_model] through the output projection.
Tensor merge_heads(const Tensor& ctx, const Tensor& wo, const ModelConfig& cfg,
                   int B, int T, Tape* tape) {
  Tensor c4 = reshape(ctx, {B, cfg.n_heads, T, cfg.d_kv});
  Tensor ct = transpose(c4, {0, 2, 1, 3}, tape);
  Tensor flat = reshape(ct, {B * T, cfg.inner()});
  Tensor out = matmul(flat, wo, tape);
  return reshape(out, {B, T, cfg.d_model});
}

Tensor attention(const AttentionWeights& aw, const Tensor& x_q, const Tensor& x_kv,
                 const Tensor& bias, const std::vector<uint8_t>* key_mask, bool causal,
                 int q_offset, const ModelConfig& cfg, Tape* tape) {
  const int B = x_q.dim(0), Tq = x_q.dim(1);
  Tensor q = project_heads(x_q, aw.wq, cfg, tape);
  Tensor k = project_heads(x_kv, aw.wk, cfg, tape);
  Tensor v = project_heads(x_kv, aw.wv, cfg, tape);
  Tensor scores = bmm(q, k, true, tape);
  scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(cfg.d_kv)), tape);
  scores = apply_attention_bias(scores, bias, key_mask, B, causal, q_offset, tape);
  Tensor attn = softmax(scores, -1, tape);
  Tensor ctx = bmm(attn, v, false, tape);
  return merge_heads(ctx, aw.wo, cfg, B, Tq, tape);
}

Tensor feed_forward(const LayerWeights& lw, const Tensor& x, const ModelConfig& cfg,
                    Tape* tape) {
  const int B = x.dim(0), T = x.dim(1);
  Tensor flat = reshape(x, {B * T, cfg.d_model});
  Tensor h;
  if (lw.ff_gate.defined()) {
    Tensor a = relu(matmul(flat, lw.ff_in, tape), tape);
    Tensor g = matmul(flat, lw.ff_gate, tape);
    h = mul(a, g, tape);
  } else {
    h = relu(matmul(flat, lw.ff_in, tape), tape);
  }
  Tensor out = matmul(h, lw.ff_out, tape);
  return reshape(out, {B, T, cfg.d_model});
}

Tensor lm_logits(const ModelWeights& w, const Tensor& hidden, Tape* tape) {
  const int B = hidden.dim(0), T = hidden.dim(1);
  const ModelConfig& cfg = w.config;
  Tensor flat = reshape(hidden, {B * T, cfg.d_model});
  Tensor logits;
  if (w.config.tie_embeddings) {
    Tensor a = reshape(flat, {1, B * T, cfg.d_model});
    Tensor b = reshape(w.embedding, {1, cfg.vocab_size, cfg.d_model});
    logits = reshape(bmm(a, b, true, tape), {B * T, cfg.vocab_size});
  } else {
    logits = matmul(flat, w.lm_head, tape);
  }
  return reshape(logits, {B, T, cfg.vocab_size});
}

}  // namespace

EncodedBatch encode(const ModelWeights& w, const std::vector<std::vector<int>>& token_ids,
                    Tape* tape) {
  const ModelConfig& cfg = w.config;
  if (token_ids.empty()) throw std::invalid_argument("encode: empty batch");
  int T = 0;
  for (const auto& seq : token_ids) {
    if (seq.empty()) throw std::invalid_argument("encode: empty sequence in batch");
    if (static_cast<int>(seq.size()) > cfg.max_input_len)
      throw std::invalid_argument("encode: sequence length " +
                                  std::to_string(seq.size()) + " exceeds max input " +
                                  std::to_string(cfg.max_input_len));
    for (int id : seq)
      if (id < 0 || id >= cfg.vocab_size)
        throw std::invalid_argument("encode: token id " + std::to_string(id) +
                                    " outside vocab of size " +
                                    std::to_string(cfg.vocab_size));
    T = std::max(T, static_cast<int>(seq.size()));
  }
  const int B = static_cast<int>(token_ids.size());

  std::vector<int> flat(static_cast<size_t>(B) * T, 0);
  std::vector<uint8_t> mask(static_cast<size_t>(B) * T, 0);
  for (int b = 0; b < B; ++b) {
    const auto& seq = token_ids[static_cast<size_t>(b)];
    for (size_t t = 0; t < seq.size(); ++t) {
      flat[static_cast<size_t>(b) * T + t] = seq[t];
      mask[static_cast<size_t>(b) * T + t] = 1;
    }
  }

  Tensor h = reshape(embedding(flat, w.embedding, tape), {B, T, cfg.d_model});
  Tensor bias =
      build_rel_bias(w.encoder.rel_bias_table, cfg, T, T, 0, /*bidirectional=*/true, tape);
  for (const LayerWeights& lw : w.encoder.layers) {
    Tensor hn = rms_norm(h, lw.norm_self, cfg.norm_eps, tape);
    Tensor a = attention(lw.self_attn, hn, hn, bias, &mask, false, 0, cfg, tape);
    h = add(h, a, tape);
    Tensor fn = rms_norm(h, lw.norm_ff, cfg.norm_eps, tape);
    Tensor f = feed_forward(lw, fn, cfg, tape);
    h = add(h, f, tape);
  }
  h = rms_norm(h, w.encoder.final_norm, cfg.norm_eps, tape);

  EncodedBatch out;
  out.hidden = h;
  out.mask = std::move(mask);
  out.batch = B;
  out.len = T;
  return out;
}

Tensor decoder_forward(const ModelWeights& w, const EncodedBatch& enc,
                       const std::vector<std::vector<int>>& decoder_input_ids,
                       Tape* tape) {
  const ModelConfig& cfg = w.config;
  if (static_cast<int>(decoder_input_ids.size()) != enc.batch)
    throw std::invalid_argument("decoder_forward: batch size mismatch with encoder");
  int T = 0;
  for (const auto& seq : decoder_input_ids) T = std::max(T, static_cast<int>(seq.size()));
  if (T == 0) throw std::invalid_argument("decoder_forward: empty decoder inputs");
  const int B = enc.batch;

  std::vector<int> flat(static_cast<size_t>(B) * T, 0);
  for (int b = 0; b < B; ++b) {
    const auto& seq = decoder_input_ids[static_cast<size_t>(b)];
    for (size_t t = 0; t < seq.size(); ++t) flat[static_cast<size_t>(b) * T + t] = seq[t];
  }

  Tensor h = reshape(embedding(flat, w.embedding, tape), {B, T, cfg.d_model});
  Tensor self_bias =
      build_rel_bias(w.decoder.rel_bias_table, cfg, T, T, 0, /*bidirectional=*/false, tape);
  Tensor no_bias;
  for (const LayerWeights& lw : w.decoder.layers) {
    Tensor hn = rms_norm(h, lw.norm_self, cfg.norm_eps, tape);
    Tensor a = attention(lw.self_attn, hn, hn, self_bias, nullptr, /*causal=*/true, 0,
                         cfg, tape);
    h = add(h, a, tape);
    Tensor cn = rms_norm(h, lw.norm_cross, cfg.norm_eps, tape);
    Tensor c = attention(lw.cross_attn, cn, enc.hidden, no_bias, &enc.mask, false, 0,
                         cfg, tape);
    h = add(h, c, tape);
    Tensor fn = rms_norm(h, lw.norm_ff, cfg.norm_eps, tape);
    Tensor f = feed_forward(lw, fn, cfg, tape);
    h = add(h, f, tape);
  }
  h = rms_norm(h, w.decoder.final_norm, cfg.norm_eps, tape);
  return lm_logits(w, h, tape);
}

DecodeCache init_decode_cache(const ModelWeights& w, const EncodedBatch& enc,
                              int max_steps) {
  const ModelConfig& cfg = w.config;
  if (max_steps < 1) throw std::invalid_argument("decode cache: max_steps must be >= 1");
  DecodeCache cache;
  cache.batch = enc.batch;
  cache.capacity = max_steps;
  cache.src_len = enc.len;
  cache.src_mask = enc.mask;
  const int BH = enc.batch * cfg.n_heads;
  for (const LayerWeights& lw : w.decoder.layers) {
    cache.self_k.push_back(Tensor({BH, max_steps, cfg.d_kv}));
    cache.self_v.push_back(Tensor({BH, max_steps, cfg.d_kv}));
    cache.cross_k.push_back(project_heads(enc.hidden, lw.cross_attn.wk, cfg, nullptr));
    cache.cross_v.push_back(project_heads(enc.hidden, lw.cross_attn.wv, cfg, nullptr));
  }
  return cache;
}

Tensor decode_step(const ModelWeights& w, DecodeCache& cache,
                   const std::vector<int>& new_tokens) {
  const ModelConfig& cfg = w.config;
  const int B = cache.batch;
  if (static_cast<int>(new_tokens.size()) != B)
    throw std::invalid_argument("decode_step: token count does not match cache batch");
  if (cache.step >= cache.capacity)
    throw std::runtime_error("decode_step: cache capacity exceeded");
  if (static_cast<int>(cache.self_k.size()) != cfg.n_dec_layers)
    throw std::invalid_argument("decode_step: cache layer count mismatch");
  const int step = cache.step;
  const int len = step + 1;
  const int BH = B * cfg.n_heads;
  const int dk = cfg.d_kv;

  Tensor x = reshape(embedding(new_tokens, w.embedding, nullptr), {B, 1, cfg.d_model});
  Tensor bias = build_rel_bias(w.decoder.rel_bias_table, cfg, 1, len, step,
                               /*bidirectional=*/false, nullptr);
  Tensor no_bias;

  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    const LayerWeights& lw = w.decoder.layers[static_cast<size_t>(l)];
    Tensor hn = rms_norm(x, lw.norm_self, cfg.norm_eps, nullptr);
    Tensor q = project_heads(hn, lw.self_attn.wq, cfg, nullptr);
    Tensor k = project_heads(hn, lw.self_attn.wk, cfg, nullptr);
    Tensor v = project_heads(hn, lw.self_attn.wv, cfg, nullptr);

    // Append to the cache, then read back rows [0, len).
    Tensor& ck = cache.self_k[static_cast<size_t>(l)];
    Tensor& cv = cache.self_v[static_cast<size_t>(l)];
    for (int bh = 0; bh < BH; ++bh) {
      std::memcpy(ck.raw() + (static_cast<long long>(bh) * cache.capacity + step) * dk,
                  k.raw() + static_cast<long long>(bh) * dk, sizeof(double) * dk);
      std::memcpy(cv.raw() + (static_cast<long long>(bh) * cache.capacity + step) * dk,
                  v.raw() + static_cast<long long>(bh) * dk, sizeof(double) * dk);
    }
    Tensor kseq({BH, len, dk}), vseq({BH, len, dk});
    for (int bh = 0; bh < BH; ++bh) {
      std::memcpy(kseq.raw() + static_cast<long long>(bh) * len * dk,
                  ck.raw() + static_cast<long long>(bh) * cache.capacity * dk,
                  sizeof(double) * static_cast<size_t>(len) * dk);
      std::memcpy(vseq.raw() + static_cast<long long>(bh) * len * dk,
                  cv.raw() + static_cast<long long>(bh) * cache.capacity * dk,
                  sizeof(double) * static_cast<size_t>(len) * dk);
    }

    Tensor scores = bmm(q, kseq, true, nullptr);
    scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(dk)), nullptr);
    scores = apply_attention_bias(scores, bias, nullptr, B, false, 0, nullptr);
    Tensor attn = softmax(scores, -1, nullptr);
    Tensor ctx = bmm(attn, vseq, false, nullptr);
    Tensor a = merge_heads(ctx, lw.self_attn.wo, cfg, B, 1, nullptr);
    x = add(x, a, nullptr);

    Tensor cn = rms_norm(x, lw.norm_cross, cfg.norm_eps, nullptr);
    Tensor cq = project_heads(cn, lw.cross_attn.wq, cfg, nullptr);
    Tensor cscores = bmm(cq, cache.cross_k[static_cast<size_t>(l)], true, nullptr);
    cscores = scale(cscores, 1.0 / std::sqrt(static_cast<double>(dk)), nullptr);
    cscores =
        apply_attention_bias(cscores, no_bias, &cache.src_mask, B, false, 0, nullptr);
    Tensor cattn = softmax(cscores, -1, nullptr);
    Tensor cctx = bmm(cattn, cache.cross_v[static_cast<size_t>(l)], false, nullptr);
    Tensor c = merge_heads(cctx, lw.cross_attn.wo, cfg, B, 1, nullptr);
    x = add(x, c, nullptr);

    Tensor fn = rms_norm(x, lw.norm_ff, cfg.norm_eps, nullptr);
    Tensor f = feed_forward(lw, fn, cfg, nullptr);
    x = add(x, f, nullptr);
  }
  x = rms_norm(x, w.decoder.final_norm, cfg.norm_eps, nullptr);
  Tensor logits = lm_logits(w, x, nullptr);
  cache.step = len;
  return reshape(logits, {B, cfg.vocab_size});
}

}  // namespace asymprune
