#pragma once

#include <string>
#include <vector>

#include "asymprune/model.hpp"

namespace asymprune {

enum class RetainStrategy { EvenlySpaced, FirstK, LastK };

struct PruneSpec {
  int enc_keep = 0;  // l_enc
  int dec_keep = 0;  // l_dec
  RetainStrategy strategy = RetainStrategy::EvenlySpaced;

  bool operator==(const PruneSpec&) const = default;
};

RetainStrategy strategy_from_string(const std::string& s);
std::string strategy_to_string(RetainStrategy s);

// Indices of the k layers retained out of L, strictly increasing.
// EvenlySpaced: index_i = round-half-up(i*(L-1)/(k-1)), keeping the first
// and last layer; k = 1 keeps layer 0.
std::vector<int> select_layers(int total, int keep, RetainStrategy strategy);

// Structural layer removal. Retained layers are bit-identical copies; the
// stack bias table and final norm carry over, embeddings and head untouched.
ModelWeights prune(const ModelWeights& weights, const PruneSpec& spec);

// The paper-style grid for an n-layer stack: baseline (n,n), decoder-only
// (n,k), encoder-only (k,n), symmetric (k,k) for k = n-1..1. 16 specs for
// n = 6.
std::vector<PruneSpec> enumerate_grid(int n_layers);

}  // namespace asymprune
