#include "asymprune/rouge.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace asymprune {

Prf prf_from_counts(double overlap, double cand_units, double ref_units) {
  Prf out;
  out.p = cand_units > 0 ? overlap / cand_units : 0.0;
  out.r = ref_units > 0 ? overlap / ref_units : 0.0;
  out.f1 = (out.p + out.r) > 0 ? 2.0 * out.p * out.r / (out.p + out.r) : 0.0;
  return out;
}

Prf rouge_n(const std::vector<int>& candidate, const std::vector<int>& reference,
            int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be >= 1");
  const long long nc = static_cast<long long>(candidate.size()) - n + 1;
  const long long nr = static_cast<long long>(reference.size()) - n + 1;
  if (nc <= 0 || nr <= 0) return {};

  std::map<std::vector<int>, long long> ref_counts;
  for (long long i = 0; i < nr; ++i)
    ++ref_counts[std::vector<int>(reference.begin() + i, reference.begin() + i + n)];

  long long overlap = 0;
  std::map<std::vector<int>, long long> used;
  for (long long i = 0; i < nc; ++i) {
    std::vector<int> gram(candidate.begin() + i, candidate.begin() + i + n);
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end() && used[gram] < it->second) {
      ++used[gram];
      ++overlap;
    }
  }
  return prf_from_counts(static_cast<double>(overlap), static_cast<double>(nc),
                         static_cast<double>(nr));
}

namespace {

std::vector<std::vector<int>> lcs_table(const std::vector<int>& a,
                                        const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j)
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                      : std::max(dp[i - 1][j], dp[i][j - 1]);
  return dp;
}

}  // namespace

Prf rouge_l_sentence(const std::vector<int>& candidate,
                     const std::vector<int>& reference) {
  if (candidate.empty() || reference.empty()) return {};
  const auto dp = lcs_table(reference, candidate);
  const int lcs = dp[reference.size()][candidate.size()];
  return prf_from_counts(static_cast<double>(lcs),
                         static_cast<double>(candidate.size()),
                         static_cast<double>(reference.size()));
}

std::vector<int> lcs_reference_positions(const std::vector<int>& reference,
                                         const std::vector<int>& candidate) {
  if (reference.empty() || candidate.empty()) return {};
  const auto dp = lcs_table(reference, candidate);
  std::vector<int> positions;
  size_t i = reference.size(), j = candidate.size();
  while (i > 0 && j > 0) {
    if (reference[i - 1] == candidate[j - 1]) {
      positions.push_back(static_cast<int>(i - 1));
      --i;
      --j;
    } else if (dp[i - 1][j] >= dp[i][j - 1]) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(positions.begin(), positions.end());
  return positions;
}

Prf rouge_lsum(const std::vector<std::vector<int>>& candidate_sentences,
               const std::vector<std::vector<int>>& reference_sentences) {
  long long ref_tokens = 0, cand_tokens = 0;
  for (const auto& s : reference_sentences) ref_tokens += static_cast<long long>(s.size());
  for (const auto& s : candidate_sentences) cand_tokens += static_cast<long long>(s.size());
  if (ref_tokens == 0 || cand_tokens == 0) return {};

  long long hits = 0;
  for (const auto& ref : reference_sentences) {
    std::set<int> covered;
    for (const auto& cand : candidate_sentences)
      for (int pos : lcs_reference_positions(ref, cand)) covered.insert(pos);
    hits += static_cast<long long>(covered.size());
  }
  return prf_from_counts(static_cast<double>(hits), static_cast<double>(cand_tokens),
                         static_cast<double>(ref_tokens));
}

Comparison compare(double candidate_score, double baseline_score) {
  if (baseline_score <= 0.0)
    throw std::invalid_argument("compare: baseline score must be > 0");
  Comparison c;
  c.recall_pct = 100.0 * candidate_score / baseline_score;
  c.impact_pct = c.recall_pct - 100.0;
  c.speedup = 1.0;
  return c;
}

}  // namespace asymprune
