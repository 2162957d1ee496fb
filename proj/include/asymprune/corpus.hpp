#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace asymprune {

// Reserved token ids shared by every corpus.
namespace special {
constexpr int kPad = 0;
constexpr int kEos = 1;
constexpr int kBos = 2;
constexpr int kUnk = 3;
constexpr int kSep = 4;  // sentinel that flanks keywords in the extraction task
constexpr int kCount = 5;
}  // namespace special

struct Vocab {
  std::vector<std::string> words;  // index == id
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(words.size()); }
  int add(const std::string& w);          // returns existing id if present
  int id_or_unk(const std::string& w) const;
  const std::string& word(int id) const { return words[static_cast<size_t>(id)]; }

  static Vocab with_specials();
  // Specials plus content words "w5".."w{n-1}".
  static Vocab synthetic(int vocab_size);

  bool operator==(const Vocab& o) const { return words == o.words; }
};

struct Pair {
  std::vector<int> source;   // the document D
  std::vector<int> summary;  // the target d_sum
  bool operator==(const Pair&) const = default;
};

struct Corpus {
  Vocab vocab;
  std::vector<Pair> train, valid, test;

  size_t total_pairs() const { return train.size() + valid.size() + test.size(); }
  bool operator==(const Corpus&) const = default;
};

struct CorpusStats {
  long long n_train = 0, n_valid = 0, n_test = 0;
  double mean_source_len = 0.0;
  double mean_summary_len = 0.0;
  // Mean over pairs of source_len / summary_len, on the train portion.
  double compression_factor = 0.0;
};

enum class SynthTask { KeywordExtract, LeadK, SortedUnique };

SynthTask task_from_string(const std::string& s);
std::string task_to_string(SynthTask t);

struct SynthSpec {
  SynthTask task = SynthTask::LeadK;
  uint64_t seed = 1;
  int n_pairs = 100;
  int vocab_size = 64;
  int src_len_min = 8;
  int src_len_max = 16;
  double compression_target = 2.0;  // must be > 1
};

// Deterministic synthetic summarization corpus with disjoint
// train/valid/test splits. KeywordExtract copies sentinel-flanked tokens
// (encoder-heavy), LeadK copies the first k tokens, SortedUnique emits the
// sorted set of source tokens (decoder-heavy).
Corpus synth_generate(const SynthSpec& spec);

// TSV ingestion: one pair per line, a single tab between source and summary,
// whitespace tokenization. Without an explicit vocab a new one is built in
// first-appearance order; with one, unknown words map to <unk>. All pairs
// land in the train split; use split_corpus for partitions.
Corpus load_tsv(const std::string& path);
Corpus load_tsv(const std::string& path, const Vocab& vocab);
void write_tsv(const Corpus& corpus, const std::string& path);

// Seeded disjoint 80/10/10 partition of all pairs.
Corpus split_corpus(const Corpus& corpus, uint64_t seed);

CorpusStats stats(const Corpus& corpus);

// Versioned binary cache with exact token ids.
void save_corpus_cache(const Corpus& corpus, const std::string& path);
Corpus load_corpus_cache(const std::string& path);

}  // namespace asymprune
