#include "asymprune/pruning.hpp"

#include <cmath>
#include <stdexcept>

namespace asymprune {

RetainStrategy strategy_from_string(const std::string& s) {
  if (s == "evenly" || s == "evenly_spaced") return RetainStrategy::EvenlySpaced;
  if (s == "first_k") return RetainStrategy::FirstK;
  if (s == "last_k") return RetainStrategy::LastK;
  throw std::invalid_argument("unknown retention strategy: " + s);
}

std::string strategy_to_string(RetainStrategy s) {
  switch (s) {
    case RetainStrategy::EvenlySpaced: return "evenly";
    case RetainStrategy::FirstK: return "first_k";
    case RetainStrategy::LastK: return "last_k";
  }
  return "?";
}

std::vector<int> select_layers(int total, int keep, RetainStrategy strategy) {
  if (keep < 1 || keep > total)
    throw std::invalid_argument("select_layers: keep " + std::to_string(keep) +
                                " out of range [1," + std::to_string(total) + "]");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(keep));
  switch (strategy) {
    case RetainStrategy::EvenlySpaced: {
      if (keep == 1) return {0};
      for (int i = 0; i < keep; ++i) {
        // round half up, fixed tie-break so grids reproduce across platforms
        const double pos = static_cast<double>(i) * (total - 1) / (keep - 1);
        out.push_back(static_cast<int>(std::floor(pos + 0.5)));
      }
      break;
    }
    case RetainStrategy::FirstK:
      for (int i = 0; i < keep; ++i) out.push_back(i);
      break;
    case RetainStrategy::LastK:
      for (int i = total - keep; i < total; ++i) out.push_back(i);
      break;
  }
  return out;
}

namespace {

LayerWeights copy_layer(const LayerWeights& l) {
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
  return nl;
}

StackWeights prune_stack(const StackWeights& src, int total, int keep,
                         RetainStrategy strategy) {
  StackWeights dst;
  for (int idx : select_layers(total, keep, strategy))
    dst.layers.push_back(copy_layer(src.layers[static_cast<size_t>(idx)]));
  // The bias table rides with the stack; if layer 0 was dropped this is the
  // migration to the new first layer, copied verbatim.
  dst.rel_bias_table = src.rel_bias_table.deep_copy();
  dst.final_norm = src.final_norm.deep_copy();
  return dst;
}

}  // namespace

ModelWeights prune(const ModelWeights& weights, const PruneSpec& spec) {
  const ModelConfig& cfg = weights.config;
  if (spec.enc_keep < 1 || spec.enc_keep > cfg.n_enc_layers)
    throw std::invalid_argument("prune: enc_keep " + std::to_string(spec.enc_keep) +
                                " out of range [1," + std::to_string(cfg.n_enc_layers) +
                                "]");
  if (spec.dec_keep < 1 || spec.dec_keep > cfg.n_dec_layers)
    throw std::invalid_argument("prune: dec_keep " + std::to_string(spec.dec_keep) +
                                " out of range [1," + std::to_string(cfg.n_dec_layers) +
                                "]");
  ModelWeights out;
  out.config = cfg;
  out.config.n_enc_layers = spec.enc_keep;
  out.config.n_dec_layers = spec.dec_keep;
  out.embedding = weights.embedding.deep_copy();
  out.encoder = prune_stack(weights.encoder, cfg.n_enc_layers, spec.enc_keep, spec.strategy);
  out.decoder = prune_stack(weights.decoder, cfg.n_dec_layers, spec.dec_keep, spec.strategy);
  if (weights.lm_head.defined()) out.lm_head = weights.lm_head.deep_copy();
  return out;
}

std::vector<PruneSpec> enumerate_grid(int n_layers) {
  if (n_layers < 2)
    throw std::invalid_argument("enumerate_grid: need at least 2 layers, got " +
                                std::to_string(n_layers));
  std::vector<PruneSpec> grid;
  grid.push_back({n_layers, n_layers, RetainStrategy::EvenlySpaced});
  for (int k = n_layers - 1; k >= 1; --k)
    grid.push_back({n_layers, k, RetainStrategy::EvenlySpaced});
  for (int k = n_layers - 1; k >= 1; --k)
    grid.push_back({k, n_layers, RetainStrategy::EvenlySpaced});
  for (int k = n_layers - 1; k >= 1; --k)
    grid.push_back({k, k, RetainStrategy::EvenlySpaced});
  return grid;
}

}  // namespace asymprune
