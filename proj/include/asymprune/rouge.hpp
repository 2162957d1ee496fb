#pragma once

#include <vector>

namespace asymprune {

struct Prf {
  double p = 0.0;
  double r = 0.0;
  double f1 = 0.0;
  bool operator==(const Prf&) const = default;
};

// f1 is the harmonic mean, 0 when p + r == 0.
Prf prf_from_counts(double overlap, double cand_units, double ref_units);

// Clipped n-gram overlap between token sequences; degenerate inputs
// (fewer than n tokens on either side) score zero.
Prf rouge_n(const std::vector<int>& candidate, const std::vector<int>& reference, int n);

// Sentence-level ROUGE-L: r = LCS/|ref|, p = LCS/|cand|.
Prf rouge_l_sentence(const std::vector<int>& candidate,
                     const std::vector<int>& reference);

// LCS match positions within `reference`, using a pinned backtrace: walk
// from the ends, take matches diagonally, otherwise drop a reference token
// when dp[i-1][j] >= dp[i][j-1], else a candidate token. rouge_lsum unions
// these index sets, so the tie-break is part of the metric definition.
std::vector<int> lcs_reference_positions(const std::vector<int>& reference,
                                         const std::vector<int>& candidate);

// Summary-level ROUGE-L: for each reference sentence, the union over
// candidate sentences of LCS hit positions; recall over total reference
// tokens, precision over total candidate tokens.
Prf rouge_lsum(const std::vector<std::vector<int>>& candidate_sentences,
               const std::vector<std::vector<int>>& reference_sentences);

struct RougeScores {
  Prf r1, r2, rl, rlsum;
  double genl = 0.0;
  bool operator==(const RougeScores&) const = default;
};

struct Comparison {
  double recall_pct = 100.0;  // R = 100 * score / baseline
  double impact_pct = 0.0;    // R - 100
  double speedup = 1.0;       // filled by the latency side
};

// R and impact versus the uncompressed baseline; throws on baseline <= 0.
Comparison compare(double candidate_score, double baseline_score);

}  // namespace asymprune
