#include "asymprune/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "asymprune/rng.hpp"

namespace asymprune {

int Vocab::add(const std::string& w) {
  auto it = index.find(w);
  if (it != index.end()) return it->second;
  const int id = static_cast<int>(words.size());
  words.push_back(w);
  index.emplace(w, id);
  return id;
}

int Vocab::id_or_unk(const std::string& w) const {
  auto it = index.find(w);
  return it == index.end() ? special::kUnk : it->second;
}

Vocab Vocab::with_specials() {
  Vocab v;
  v.add("<pad>");
  v.add("</s>");
  v.add("<s>");
  v.add("<unk>");
  v.add("<sep>");
  return v;
}

Vocab Vocab::synthetic(int vocab_size) {
  if (vocab_size <= special::kCount)
    throw std::invalid_argument("vocab: synthetic vocab needs more than " +
                                std::to_string(special::kCount) + " entries");
  Vocab v = with_specials();
  for (int i = special::kCount; i < vocab_size; ++i) v.add("w" + std::to_string(i));
  return v;
}

SynthTask task_from_string(const std::string& s) {
  if (s == "keyword" || s == "keyword_extract") return SynthTask::KeywordExtract;
  if (s == "leadk" || s == "lead_k") return SynthTask::LeadK;
  if (s == "sorted_unique") return SynthTask::SortedUnique;
  throw std::invalid_argument("unknown synthetic task: " + s);
}

std::string task_to_string(SynthTask t) {
  switch (t) {
    case SynthTask::KeywordExtract: return "keyword";
    case SynthTask::LeadK: return "leadk";
    case SynthTask::SortedUnique: return "sorted_unique";
  }
  return "?";
}

namespace {

int content_lo(const Vocab&) { return special::kCount; }

std::vector<int> random_content(Rng& rng, int n, int vocab_size) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int& t : out) t = rng.next_int(special::kCount, vocab_size - 1);
  return out;
}

Pair make_leadk(Rng& rng, int len, double compression, int vocab_size) {
  int k = std::max<int>(1, static_cast<int>(std::llround(len / compression)));
  if (k >= len)
    throw std::invalid_argument("synth: infeasible length constraints (LeadK summary "
                                "not shorter than source)");
  Pair p;
  p.source = random_content(rng, len, vocab_size);
  p.summary.assign(p.source.begin(), p.source.begin() + k);
  return p;
}

Pair make_keyword(Rng& rng, int len, double compression, int vocab_size) {
  int k = std::max<int>(1, static_cast<int>(std::llround(len / compression)));
  if (3 * k > len)
    throw std::invalid_argument(
        "synth: infeasible length constraints (KeywordExtract needs len >= 3k)");
  const int n_base = len - 3 * k;
  std::vector<int> keywords = random_content(rng, k, vocab_size);
  std::vector<int> base = random_content(rng, n_base, vocab_size);
  // k insertion slots over n_base+1 gaps, sorted; duplicates allowed.
  std::vector<int> slots(static_cast<size_t>(k));
  for (int& s : slots) s = rng.next_int(0, n_base);
  std::sort(slots.begin(), slots.end());
  Pair p;
  size_t next = 0;
  for (int pos = 0; pos <= n_base; ++pos) {
    while (next < slots.size() && slots[next] == pos) {
      p.source.push_back(special::kSep);
      p.source.push_back(keywords[next]);
      p.source.push_back(special::kSep);
      ++next;
    }
    if (pos < n_base) p.source.push_back(base[static_cast<size_t>(pos)]);
  }
  for (size_t i = 0; i < keywords.size(); ++i) p.summary.push_back(keywords[i]);
  return p;
}

Pair make_sorted_unique(Rng& rng, int len, double compression, int vocab_size) {
  int u = std::max<int>(1, static_cast<int>(std::llround(len / compression)));
  if (u >= len)
    throw std::invalid_argument("synth: infeasible length constraints (SortedUnique "
                                "summary not shorter than source)");
  const int content = vocab_size - special::kCount;
  if (u > content)
    throw std::invalid_argument("synth: infeasible length constraints (vocab too small "
                                "for requested unique count)");
  // Exactly u distinct tokens, each appearing at least once.
  std::vector<int> pool(static_cast<size_t>(content));
  std::iota(pool.begin(), pool.end(), special::kCount);
  for (int i = content - 1; i > 0; --i)
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(rng.next_int(0, i))]);
  pool.resize(static_cast<size_t>(u));

  Pair p;
  p.source.reserve(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i)
    p.source.push_back(i < u ? pool[static_cast<size_t>(i)]
                             : pool[static_cast<size_t>(rng.next_int(0, u - 1))]);
  for (int i = len - 1; i > 0; --i)
    std::swap(p.source[static_cast<size_t>(i)],
              p.source[static_cast<size_t>(rng.next_int(0, i))]);
  p.summary = pool;
  std::sort(p.summary.begin(), p.summary.end());
  return p;
}

}  // namespace

Corpus synth_generate(const SynthSpec& spec) {
  if (spec.compression_target <= 1.0)
    throw std::invalid_argument("synth: compression_target must be > 1");
  if (spec.n_pairs < 3)
    throw std::invalid_argument("synth: need at least 3 pairs for splits");
  if (spec.src_len_min < 2 || spec.src_len_max < spec.src_len_min)
    throw std::invalid_argument("synth: bad source length range");

  Corpus corpus;
  corpus.vocab = Vocab::synthetic(spec.vocab_size);
  Rng rng(spec.seed);

  std::vector<Pair> pairs;
  pairs.reserve(static_cast<size_t>(spec.n_pairs));
  for (int i = 0; i < spec.n_pairs; ++i) {
    const int len = rng.next_int(spec.src_len_min, spec.src_len_max);
    switch (spec.task) {
      case SynthTask::LeadK:
        pairs.push_back(make_leadk(rng, len, spec.compression_target, spec.vocab_size));
        break;
      case SynthTask::KeywordExtract:
        pairs.push_back(make_keyword(rng, len, spec.compression_target, spec.vocab_size));
        break;
      case SynthTask::SortedUnique:
        pairs.push_back(
            make_sorted_unique(rng, len, spec.compression_target, spec.vocab_size));
        break;
    }
  }

  Corpus flat;
  flat.vocab = corpus.vocab;
  flat.train = std::move(pairs);
  return split_corpus(flat, rng.next_u64());
}

Corpus split_corpus(const Corpus& corpus, uint64_t seed) {
  std::vector<Pair> all;
  all.insert(all.end(), corpus.train.begin(), corpus.train.end());
  all.insert(all.end(), corpus.valid.begin(), corpus.valid.end());
  all.insert(all.end(), corpus.test.begin(), corpus.test.end());
  const int n = static_cast<int>(all.size());
  if (n < 3) throw std::invalid_argument("split_corpus: need at least 3 pairs");

  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.next_int(0, i))]);

  const int n_valid = std::max(1, n / 10);
  const int n_test = std::max(1, n / 10);
  Corpus out;
  out.vocab = corpus.vocab;
  for (int i = 0; i < n; ++i) {
    const Pair& p = all[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    if (i < n - n_valid - n_test)
      out.train.push_back(p);
    else if (i < n - n_test)
      out.valid.push_back(p);
    else
      out.test.push_back(p);
  }
  return out;
}

namespace {

std::vector<int> tokenize_line(const std::string& text, Vocab& vocab, bool grow) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(grow ? vocab.add(w) : vocab.id_or_unk(w));
  return out;
}

Corpus load_tsv_impl(const std::string& path, Vocab vocab, bool grow) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_tsv: cannot open: " + path);
  Corpus corpus;
  std::string line;
  long long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("load_tsv: line " + std::to_string(line_no) +
                               ": missing tab separator");
    if (line.find('\t', tab + 1) != std::string::npos)
      throw std::runtime_error("load_tsv: line " + std::to_string(line_no) +
                               ": more than one tab");
    Pair p;
    p.source = tokenize_line(line.substr(0, tab), vocab, grow);
    p.summary = tokenize_line(line.substr(tab + 1), vocab, grow);
    if (p.source.empty() || p.summary.empty())
      throw std::runtime_error("load_tsv: line " + std::to_string(line_no) +
                               ": empty source or summary");
    corpus.train.push_back(std::move(p));
  }
  corpus.vocab = std::move(vocab);
  return corpus;
}

}  // namespace

Corpus load_tsv(const std::string& path) {
  return load_tsv_impl(path, Vocab::with_specials(), true);
}

Corpus load_tsv(const std::string& path, const Vocab& vocab) {
  return load_tsv_impl(path, vocab, false);
}

void write_tsv(const Corpus& corpus, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_tsv: cannot open for write: " + path);
  auto write_split = [&os, &corpus](const std::vector<Pair>& split) {
    for (const Pair& p : split) {
      for (size_t i = 0; i < p.source.size(); ++i)
        os << (i ? " " : "") << corpus.vocab.word(p.source[i]);
      os << '\t';
      for (size_t i = 0; i < p.summary.size(); ++i)
        os << (i ? " " : "") << corpus.vocab.word(p.summary[i]);
      os << '\n';
    }
  };
  write_split(corpus.train);
  write_split(corpus.valid);
  write_split(corpus.test);
  if (!os) throw std::runtime_error("write_tsv: write failed: " + path);
}

CorpusStats stats(const Corpus& corpus) {
  if (corpus.total_pairs() == 0) throw std::invalid_argument("stats: empty corpus");
  const std::vector<Pair>& base = corpus.train.empty() ? corpus.test : corpus.train;
  if (base.empty()) throw std::invalid_argument("stats: no pairs in reference split");

  CorpusStats st;
  st.n_train = static_cast<long long>(corpus.train.size());
  st.n_valid = static_cast<long long>(corpus.valid.size());
  st.n_test = static_cast<long long>(corpus.test.size());
  double src = 0, sum = 0, comp = 0;
  for (const Pair& p : base) {
    if (p.summary.empty()) throw std::invalid_argument("stats: pair with empty summary");
    src += static_cast<double>(p.source.size());
    sum += static_cast<double>(p.summary.size());
    comp += static_cast<double>(p.source.size()) / static_cast<double>(p.summary.size());
  }
  const double n = static_cast<double>(base.size());
  st.mean_source_len = src / n;
  st.mean_summary_len = sum / n;
  st.compression_factor = comp / n;
  return st;
}

namespace {

constexpr char kCacheMagic[8] = {'A', 'S', 'P', 'C', 'R', 'P', '0', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_split(std::ostream& os, const std::vector<Pair>& split) {
  write_u32(os, static_cast<uint32_t>(split.size()));
  for (const Pair& p : split) {
    write_u32(os, static_cast<uint32_t>(p.source.size()));
    os.write(reinterpret_cast<const char*>(p.source.data()),
             static_cast<std::streamsize>(p.source.size() * sizeof(int)));
    write_u32(os, static_cast<uint32_t>(p.summary.size()));
    os.write(reinterpret_cast<const char*>(p.summary.data()),
             static_cast<std::streamsize>(p.summary.size() * sizeof(int)));
  }
}

std::vector<Pair> read_split(std::istream& is) {
  std::vector<Pair> split(read_u32(is));
  for (Pair& p : split) {
    p.source.resize(read_u32(is));
    is.read(reinterpret_cast<char*>(p.source.data()),
            static_cast<std::streamsize>(p.source.size() * sizeof(int)));
    p.summary.resize(read_u32(is));
    is.read(reinterpret_cast<char*>(p.summary.data()),
            static_cast<std::streamsize>(p.summary.size() * sizeof(int)));
  }
  return split;
}

}  // namespace

void save_corpus_cache(const Corpus& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("corpus cache: cannot open for write: " + path);
  os.write(kCacheMagic, sizeof(kCacheMagic));
  write_u32(os, 1);
  write_u32(os, static_cast<uint32_t>(corpus.vocab.words.size()));
  for (const std::string& w : corpus.vocab.words) {
    write_u32(os, static_cast<uint32_t>(w.size()));
    os.write(w.data(), static_cast<std::streamsize>(w.size()));
  }
  write_split(os, corpus.train);
  write_split(os, corpus.valid);
  write_split(os, corpus.test);
  if (!os) throw std::runtime_error("corpus cache: write failed: " + path);
}

Corpus load_corpus_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("corpus cache: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCacheMagic, sizeof(kCacheMagic)) != 0)
    throw std::runtime_error("corpus cache: bad magic in " + path);
  const uint32_t version = read_u32(is);
  if (version != 1)
    throw std::runtime_error("corpus cache: unsupported version " +
                             std::to_string(version));
  Corpus corpus;
  const uint32_t n_words = read_u32(is);
  for (uint32_t i = 0; i < n_words; ++i) {
    std::string w(read_u32(is), '\0');
    is.read(w.data(), static_cast<std::streamsize>(w.size()));
    corpus.vocab.add(w);
  }
  corpus.train = read_split(is);
  corpus.valid = read_split(is);
  corpus.test = read_split(is);
  if (!is) throw std::runtime_error("corpus cache: truncated file: " + path);
  return corpus;
}

}  // namespace asymprune
