#pragma once

#include <optional>
#include <vector>

#include "asymprune/tensor.hpp"

namespace asymprune {

// Primitive tensor operations. Each op computes its forward result, checks
// the output for non-finite values, and (when `tape` is non-null and some
// input carries a gradient buffer) records a backward closure on the tape.
// Passing tape = nullptr gives the plain inference path with the same
// kernels and no recording.

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape);

// [B,m,k] x [B,k,n] -> [B,m,n]; with transpose_b, b is [B,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b, Tape* tape);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);
Tensor scale(const Tensor& a, double c, Tape* tape);
Tensor relu(const Tensor& a, Tape* tape);

// Softmax along `axis` (negative axes count from the end). Values are
// shifted by the row max before exponentiation.
Tensor softmax(const Tensor& x, int axis, Tape* tape);

// y_i = gain_i * x_i / sqrt(mean(x^2) + eps) over the last dimension.
// No mean-centering (T5-family normalization).
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps, Tape* tape);

// Row gather: out[i] = table[ids[i]]. Backward scatter-adds into the table,
// which makes this double as both token embedding and bias-table lookup.
Tensor embedding(const std::vector<int>& ids, const Tensor& table, Tape* tape);

// Mean negative log-softmax over rows whose target != ignore_index.
// logits: [..., vocab] flattened to rows; targets.size() == rows.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index, Tape* tape);

Tensor transpose(const Tensor& a, const std::vector<int>& perm, Tape* tape);

// Metadata-only: shares data and gradient storage with the input.
Tensor reshape(const Tensor& a, std::vector<int> new_shape);

Tensor sum_all(const Tensor& a, Tape* tape);

// scores: [B*H, T, S]. Adds (a) broadcast relative-position bias [H,T,S]
// when `bias` is defined, (b) -1e30 on keys masked out by `key_mask`
// ([B*S], 1 = attend), (c) -1e30 on causal violations j > i + q_offset
// when `causal` is set. Gradient flows to scores and to bias.
Tensor apply_attention_bias(const Tensor& scores, const Tensor& bias,
                            const std::vector<uint8_t>* key_mask, int batch,
                            bool causal, int q_offset, Tape* tape);

// Index of the max element along the last dimension, first index on ties.
std::vector<int> argmax_lastdim(const Tensor& t);

constexpr double kMaskNeg = -1e30;

}  // namespace asymprune
