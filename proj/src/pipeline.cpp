#include "asymprune/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "asymprune/checkpoint.hpp"
#include "asymprune/ops.hpp"
#include "asymprune/report.hpp"
#include "asymprune/rng.hpp"

namespace asymprune {

namespace {

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
  Rng r(base ^ (a * 0x9e3779b97f4a7c15ull) ^ (b * 0xc2b2ae3d27d4eb4full));
  r.next_u64();
  return r.next_u64();
}

struct TrainBatch {
  std::vector<std::vector<int>> sources;
  std::vector<std::vector<int>> dec_inputs;
  std::vector<int> targets_flat;  // [B * tgt_len], pad = ignored
  int tgt_len = 0;
  long long n_target_tokens = 0;
};

TrainBatch make_batch(const std::vector<Pair>& pairs, const std::vector<int>& idx,
                      size_t begin, size_t end) {
  TrainBatch b;
  int tgt_len = 0;
  for (size_t i = begin; i < end; ++i) {
    const Pair& p = pairs[static_cast<size_t>(idx[i])];
    tgt_len = std::max(tgt_len, static_cast<int>(p.summary.size()) + 1);  // +eos
  }
  b.tgt_len = tgt_len;
  const size_t B = end - begin;
  b.targets_flat.assign(B * static_cast<size_t>(tgt_len), special::kPad);
  for (size_t i = begin; i < end; ++i) {
    const Pair& p = pairs[static_cast<size_t>(idx[i])];
    b.sources.push_back(p.source);
    std::vector<int> din;
    din.reserve(p.summary.size() + 1);
    din.push_back(special::kBos);
    din.insert(din.end(), p.summary.begin(), p.summary.end());
    b.dec_inputs.push_back(std::move(din));
    const size_t row = (i - begin) * static_cast<size_t>(tgt_len);
    for (size_t t = 0; t < p.summary.size(); ++t)
      b.targets_flat[row + t] = p.summary[t];
    b.targets_flat[row + p.summary.size()] = special::kEos;
    b.n_target_tokens += static_cast<long long>(p.summary.size()) + 1;
  }
  return b;
}

// Pads decoder inputs to a rectangle; pad rows are ignored by the loss.
std::vector<std::vector<int>> pad_dec_inputs(const std::vector<std::vector<int>>& ins,
                                             int tgt_len) {
  std::vector<std::vector<int>> out = ins;
  for (auto& seq : out) seq.resize(static_cast<size_t>(tgt_len), special::kPad);
  return out;
}

double batch_loss(const ModelWeights& w, const TrainBatch& b, Tape* tape,
                  Tensor* loss_out) {
  EncodedBatch enc = encode(w, b.sources, tape);
  Tensor logits = decoder_forward(w, enc, pad_dec_inputs(b.dec_inputs, b.tgt_len), tape);
  Tensor loss = cross_entropy(logits, b.targets_flat, special::kPad, tape);
  if (loss_out) *loss_out = loss;
  return loss.data()[0];
}

}  // namespace

void Hyperparams::validate() const {
  if (micro_batch < 1) throw std::invalid_argument("hyperparams: micro_batch must be >= 1");
  if (effective_batch < micro_batch || effective_batch % micro_batch != 0)
    throw std::invalid_argument(
        "hyperparams: micro_batch * accumulation_steps must equal effective_batch");
  if (epochs < 0) throw std::invalid_argument("hyperparams: epochs must be >= 0");
  if (patience < 1) throw std::invalid_argument("hyperparams: patience must be >= 1");
  if (lr <= 0) throw std::invalid_argument("hyperparams: lr must be > 0");
  if (weight_decay < 0) throw std::invalid_argument("hyperparams: weight_decay must be >= 0");
}

TrainResult train(ModelWeights& weights, const Corpus& corpus, const Hyperparams& hyper) {
  hyper.validate();
  if (corpus.train.empty()) throw std::invalid_argument("train: corpus has no training pairs");

  TrainResult result;
  if (hyper.epochs == 0) return result;

  std::vector<Param> params = weights.parameters();
  OptimizerConfig ocfg;
  ocfg.learning_rate = hyper.lr;
  ocfg.weight_decay = hyper.weight_decay;
  AdamW opt(ocfg);

  const std::vector<Pair>& valid_split =
      corpus.valid.empty() ? corpus.train : corpus.valid;

  Rng shuffle_rng(derive_seed(hyper.seed, 0xA11CE));
  const int n = static_cast<int>(corpus.train.size());
  std::vector<int> order(static_cast<size_t>(n));

  ModelWeights best = weights.deep_copy();
  double best_loss = teacher_forced_loss(weights, valid_split, hyper.micro_batch);
  int stale = 0;
  int step = 0;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle_rng.next_int(0, i))]);

    for (size_t start = 0; start < static_cast<size_t>(n);
         start += static_cast<size_t>(hyper.effective_batch)) {
      const size_t stop = std::min(static_cast<size_t>(n),
                                   start + static_cast<size_t>(hyper.effective_batch));
      // micro-batches of this optimizer step
      std::vector<std::pair<size_t, size_t>> micros;
      for (size_t ms = start; ms < stop; ms += static_cast<size_t>(hyper.micro_batch))
        micros.push_back({ms, std::min(stop, ms + static_cast<size_t>(hyper.micro_batch))});

      zero_grads(params);
      double loss_acc = 0.0;
      const double micro_weight = 1.0 / static_cast<double>(micros.size());
      for (const auto& [ms, me] : micros) {
        TrainBatch batch = make_batch(corpus.train, order, ms, me);
        Tape tape;
        Tensor loss;
        try {
          batch_loss(weights, batch, &tape, &loss);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("train: divergence at optimizer step " +
                                   std::to_string(step) + ": " + e.what());
        }
        Tensor scaled = scale(loss, micro_weight, &tape);
        backward(tape, scaled);
        loss_acc += loss.data()[0] * micro_weight;
      }
      opt.step(params);
      result.curve.push_back({step, loss_acc});
      ++step;
    }

    result.epochs_run = epoch + 1;
    const double vloss = teacher_forced_loss(weights, valid_split, hyper.micro_batch);
    if (vloss < best_loss) {
      best_loss = vloss;
      best = weights.deep_copy();
      stale = 0;
    } else {
      ++stale;
      if (stale >= hyper.patience) break;
    }
  }

  weights = std::move(best);
  result.best_valid_loss = best_loss;
  result.optimizer_steps = step;
  return result;
}

double teacher_forced_loss(const ModelWeights& weights, const std::vector<Pair>& pairs,
                           int micro_batch) {
  if (pairs.empty()) throw std::invalid_argument("teacher_forced_loss: no pairs");
  std::vector<int> idx(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) idx[i] = static_cast<int>(i);
  double total = 0.0;
  long long tokens = 0;
  for (size_t start = 0; start < pairs.size(); start += static_cast<size_t>(micro_batch)) {
    const size_t stop = std::min(pairs.size(), start + static_cast<size_t>(micro_batch));
    TrainBatch batch = make_batch(pairs, idx, start, stop);
    const double loss = batch_loss(weights, batch, nullptr, nullptr);
    total += loss * static_cast<double>(batch.n_target_tokens);
    tokens += batch.n_target_tokens;
  }
  return total / static_cast<double>(tokens);
}

double token_accuracy(const ModelWeights& weights, const std::vector<Pair>& pairs,
                      int micro_batch) {
  if (pairs.empty()) throw std::invalid_argument("token_accuracy: no pairs");
  std::vector<int> idx(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) idx[i] = static_cast<int>(i);
  long long hit = 0, total = 0;
  for (size_t start = 0; start < pairs.size(); start += static_cast<size_t>(micro_batch)) {
    const size_t stop = std::min(pairs.size(), start + static_cast<size_t>(micro_batch));
    TrainBatch batch = make_batch(pairs, idx, start, stop);
    EncodedBatch enc = encode(weights, batch.sources, nullptr);
    Tensor logits =
        decoder_forward(weights, enc, pad_dec_inputs(batch.dec_inputs, batch.tgt_len),
                        nullptr);
    const std::vector<int> pred = argmax_lastdim(logits);
    for (size_t i = 0; i < batch.targets_flat.size(); ++i) {
      if (batch.targets_flat[i] == special::kPad) continue;
      ++total;
      if (pred[i] == batch.targets_flat[i]) ++hit;
    }
  }
  return total > 0 ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

RougeScores evaluate_rouge(const ModelWeights& weights, const std::vector<Pair>& pairs,
                           const GenerationConfig& gen, int eval_batch) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_rouge: no pairs");
  RougeScores agg;
  std::vector<GenerationTrace> traces;
  size_t count = 0;
  auto add = [](Prf& into, const Prf& x) {
    into.p += x.p;
    into.r += x.r;
    into.f1 += x.f1;
  };
  for (size_t start = 0; start < pairs.size(); start += static_cast<size_t>(eval_batch)) {
    const size_t stop = std::min(pairs.size(), start + static_cast<size_t>(eval_batch));
    std::vector<std::vector<int>> inputs;
    for (size_t i = start; i < stop; ++i) inputs.push_back(pairs[i].source);
    GenerationResult res = generate(weights, inputs, gen);
    traces.push_back(res.trace);
    for (size_t i = start; i < stop; ++i) {
      const std::vector<int> cand =
          strip_generation(res.tokens[i - start], gen);
      const std::vector<int>& ref = pairs[i].summary;
      add(agg.r1, rouge_n(cand, ref, 1));
      add(agg.r2, rouge_n(cand, ref, 2));
      add(agg.rl, rouge_l_sentence(cand, ref));
      add(agg.rlsum, rouge_lsum({cand}, {ref}));
      ++count;
    }
  }
  const double n = static_cast<double>(count);
  for (Prf* m : {&agg.r1, &agg.r2, &agg.rl, &agg.rlsum}) {
    m->p /= n;
    m->r /= n;
    m->f1 /= n;
  }
  agg.genl = mean_genl(traces);
  return agg;
}

namespace {

nlohmann::json prf_to_json(const Prf& m) {
  return nlohmann::json{{"p", m.p}, {"r", m.r}, {"f1", m.f1}};
}
Prf prf_from_json(const nlohmann::json& j) {
  return Prf{j.at("p").get<double>(), j.at("r").get<double>(), j.at("f1").get<double>()};
}

nlohmann::json latency_to_json(const LatencyReport& l) {
  return nlohmann::json{{"batch_size", l.batch_size},
                        {"runs", l.runs},
                        {"mean_ms", l.mean_ms},
                        {"std_ms", l.std_ms},
                        {"encoder_share", l.encoder_share},
                        {"decoder_share", l.decoder_share},
                        {"mean_steps", l.mean_steps},
                        {"workload", l.workload_tag}};
}

LatencyReport latency_from_json(const nlohmann::json& j) {
  LatencyReport l;
  l.batch_size = j.at("batch_size").get<int>();
  l.runs = j.at("runs").get<int>();
  l.mean_ms = j.at("mean_ms").get<double>();
  l.std_ms = j.at("std_ms").get<double>();
  l.encoder_share = j.at("encoder_share").get<double>();
  l.decoder_share = j.at("decoder_share").get<double>();
  l.mean_steps = j.at("mean_steps").get<double>();
  l.workload_tag = j.at("workload").get<std::string>();
  return l;
}

}  // namespace

void save_record(const ExperimentRecord& rec, const std::string& path) {
  nlohmann::json j;
  j["scale"] = rec.scale_tag;
  j["enc_keep"] = rec.spec.enc_keep;
  j["dec_keep"] = rec.spec.dec_keep;
  j["strategy"] = strategy_to_string(rec.spec.strategy);
  j["scores"] = {{"r1", prf_to_json(rec.scores.r1)},
                 {"r2", prf_to_json(rec.scores.r2)},
                 {"rl", prf_to_json(rec.scores.rl)},
                 {"rlsum", prf_to_json(rec.scores.rlsum)},
                 {"genl", rec.scores.genl}};
  j["comparison"] = {{"recall_pct", rec.cmp.recall_pct},
                     {"impact_pct", rec.cmp.impact_pct},
                     {"speedup", rec.cmp.speedup}};
  j["latency"] = nlohmann::json::array();
  for (const auto& l : rec.latency) j["latency"].push_back(latency_to_json(l));
  j["speedups"] = rec.speedups;
  j["curve"] = nlohmann::json::array();
  for (const auto& c : rec.curve) j["curve"].push_back({c.step, c.loss});

  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_record: cannot open for write: " + path);
  os << j.dump(1) << '\n';
  if (!os) throw std::runtime_error("save_record: write failed: " + path);
}

ExperimentRecord load_record(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_record: cannot open: " + path);
  nlohmann::json j;
  is >> j;
  ExperimentRecord rec;
  rec.scale_tag = j.at("scale").get<std::string>();
  rec.spec.enc_keep = j.at("enc_keep").get<int>();
  rec.spec.dec_keep = j.at("dec_keep").get<int>();
  rec.spec.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  rec.scores.r1 = prf_from_json(j.at("scores").at("r1"));
  rec.scores.r2 = prf_from_json(j.at("scores").at("r2"));
  rec.scores.rl = prf_from_json(j.at("scores").at("rl"));
  rec.scores.rlsum = prf_from_json(j.at("scores").at("rlsum"));
  rec.scores.genl = j.at("scores").at("genl").get<double>();
  rec.cmp.recall_pct = j.at("comparison").at("recall_pct").get<double>();
  rec.cmp.impact_pct = j.at("comparison").at("impact_pct").get<double>();
  rec.cmp.speedup = j.at("comparison").at("speedup").get<double>();
  for (const auto& l : j.at("latency")) rec.latency.push_back(latency_from_json(l));
  rec.speedups = j.at("speedups").get<std::vector<double>>();
  for (const auto& c : j.at("curve"))
    rec.curve.push_back({c.at(0).get<int>(), c.at(1).get<double>()});
  return rec;
}

std::vector<ExperimentRecord> load_records_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".rec") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  std::vector<ExperimentRecord> out;
  for (const auto& f : files) out.push_back(load_record(f));
  return out;
}

namespace {

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  long long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(line_no) +
                               ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: line " + std::to_string(line_no) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) {
    return kv_.count(key) > 0;
  }
  std::string str(const std::string& key, const std::string& def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    return it->second;
  }
  std::string require(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::runtime_error("config: missing key '" + key + "'");
    used_.insert(key);
    return it->second;
  }
  long long integer(const std::string& key, long long def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw std::runtime_error("config: key '" + key + "' is not an integer");
    }
  }
  double number(const std::string& key, double def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    try {
      return std::stod(it->second);
    } catch (...) {
      throw std::runtime_error("config: key '" + key + "' is not a number");
    }
  }
  bool flag(const std::string& key, bool def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    if (it->second == "on" || it->second == "true" || it->second == "1") return true;
    if (it->second == "off" || it->second == "false" || it->second == "0") return false;
    throw std::runtime_error("config: key '" + key + "' must be on/off");
  }
  void check_all_used() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw std::runtime_error("config: unknown key '" + k + "'");
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  KvReader kv(read_kv_file(path));
  RunConfig rc;

  rc.task = kv.str("task", "leadk");
  if (rc.task == "tsv") {
    rc.corpus_path = kv.require("corpus.path");
  } else {
    rc.synth.task = task_from_string(rc.task);
  }
  rc.synth.seed = static_cast<uint64_t>(kv.integer("corpus.seed", 1));
  rc.synth.n_pairs = static_cast<int>(kv.integer("corpus.n_pairs", 200));
  rc.synth.vocab_size = static_cast<int>(kv.integer("corpus.vocab_size", 64));
  rc.synth.src_len_min = static_cast<int>(kv.integer("corpus.src_len_min", 16));
  rc.synth.src_len_max = static_cast<int>(kv.integer("corpus.src_len_max", 32));
  rc.synth.compression_target = kv.number("corpus.compression", 2.0);

  for (const std::string& tag : split_csv(kv.require("scales"))) {
    ScaleConfig sc;
    sc.tag = tag;
    const std::string p = "scale." + tag + ".";
    sc.config.d_model = static_cast<int>(kv.integer(p + "d_model", 32));
    sc.config.n_heads = static_cast<int>(kv.integer(p + "n_heads", 2));
    sc.config.d_kv = static_cast<int>(kv.integer(p + "d_kv", 16));
    sc.config.d_ff = static_cast<int>(kv.integer(p + "d_ff", 64));
    const int layers = static_cast<int>(kv.integer(p + "layers", 6));
    sc.config.n_enc_layers = layers;
    sc.config.n_dec_layers = layers;
    sc.config.rel_pos_buckets = static_cast<int>(kv.integer(p + "rel_buckets", 32));
    sc.config.rel_pos_max_distance = static_cast<int>(kv.integer(p + "rel_max_dist", 128));
    sc.config.tie_embeddings = kv.flag(p + "tie_embeddings", true);
    rc.scales.push_back(sc);
  }
  if (rc.scales.empty()) throw std::runtime_error("config: no scales defined");

  rc.hyper.effective_batch = static_cast<int>(kv.integer("hyper.effective_batch", 64));
  rc.hyper.micro_batch = static_cast<int>(kv.integer("hyper.micro_batch", 8));
  rc.hyper.lr = kv.number("hyper.lr", 1e-4);
  rc.hyper.weight_decay = kv.number("hyper.weight_decay", 0.01);
  rc.hyper.epochs = static_cast<int>(kv.integer("hyper.epochs", 10));
  rc.hyper.patience = static_cast<int>(kv.integer("hyper.patience", 2));
  rc.hyper.seed = static_cast<uint64_t>(kv.integer("hyper.seed", 1));

  rc.finetune = rc.hyper;
  rc.finetune.epochs = static_cast<int>(kv.integer("finetune.epochs", rc.hyper.epochs));
  rc.finetune.lr = kv.number("finetune.lr", rc.hyper.lr);
  rc.finetune.weight_decay = kv.number("finetune.weight_decay", rc.hyper.weight_decay);

  rc.eval_pairs = static_cast<int>(kv.integer("eval.pairs", 64));
  rc.eval_batch = static_cast<int>(kv.integer("eval.batch", 8));
  rc.max_new_tokens = static_cast<int>(kv.integer("eval.max_new_tokens", 32));

  rc.bench.runs = static_cast<int>(kv.integer("bench.runs", 7));
  rc.bench.pairs = static_cast<int>(kv.integer("bench.pairs", 32));
  if (kv.has("bench.batch_sizes")) {
    rc.bench.batch_sizes.clear();
    for (const std::string& b : split_csv(kv.str("bench.batch_sizes", "")))
      rc.bench.batch_sizes.push_back(std::stoi(b));
  }
  rc.grid = kv.flag("grid", true);

  kv.check_all_used();
  if (std::find(rc.bench.batch_sizes.begin(), rc.bench.batch_sizes.end(), 1) ==
      rc.bench.batch_sizes.end())
    throw std::runtime_error("config: bench.batch_sizes must include batch size 1");
  return rc;
}

Corpus build_corpus(const RunConfig& rc) {
  if (rc.task == "tsv") {
    Corpus c = load_tsv(rc.corpus_path);
    return split_corpus(c, rc.synth.seed);
  }
  return synth_generate(rc.synth);
}

Workload make_bench_workload(const Corpus& corpus, const RunConfig& rc,
                             const std::string& tag) {
  const std::vector<Pair>& base = corpus.test.empty() ? corpus.train : corpus.test;
  if (base.empty()) throw std::invalid_argument("bench workload: empty corpus");

  std::vector<const std::vector<int>*> sorted;
  for (const Pair& p : base) sorted.push_back(&p.source);
  std::sort(sorted.begin(), sorted.end(),
            [](const std::vector<int>* a, const std::vector<int>* b) {
              return a->size() > b->size();
            });

  Workload wl;
  wl.tag = tag;
  const int n = rc.bench.pairs;
  // Long/short interleave so every batch sees the length spread.
  size_t lo = 0, hi = sorted.size() - 1;
  for (int i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      wl.inputs.push_back(*sorted[lo % sorted.size()]);
      ++lo;
    } else {
      wl.inputs.push_back(*sorted[hi % sorted.size()]);
      hi = hi == 0 ? sorted.size() - 1 : hi - 1;
    }
  }
  wl.gen.max_new_tokens = rc.max_new_tokens;
  wl.gen.eos_id = special::kEos;
  wl.gen.pad_id = special::kPad;
  wl.gen.bos_id = special::kBos;
  return wl;
}

namespace {

GenerationConfig eval_gen_config(const RunConfig& rc) {
  GenerationConfig gen;
  gen.max_new_tokens = rc.max_new_tokens;
  gen.eos_id = special::kEos;
  gen.pad_id = special::kPad;
  gen.bos_id = special::kBos;
  return gen;
}

std::vector<Pair> eval_slice(const Corpus& corpus, const RunConfig& rc) {
  const std::vector<Pair>& base = corpus.test.empty() ? corpus.train : corpus.test;
  std::vector<Pair> out;
  for (size_t i = 0; i < base.size() && static_cast<int>(i) < rc.eval_pairs; ++i)
    out.push_back(base[i]);
  return out;
}

}  // namespace

ExperimentRecord shrink_then_finetune(const ModelWeights& baseline,
                                      const RougeScores& baseline_scores,
                                      const std::vector<LatencyReport>& baseline_latency,
                                      const PruneSpec& spec, const Corpus& corpus,
                                      const Hyperparams& finetune_hyper,
                                      const RunConfig& rc, const Workload& bench_workload,
                                      const std::string& scale_tag) {
  ModelWeights pruned = prune(baseline, spec);
  TrainResult tr = train(pruned, corpus, finetune_hyper);

  ExperimentRecord rec;
  rec.scale_tag = scale_tag;
  rec.spec = spec;
  rec.scores = evaluate_rouge(pruned, eval_slice(corpus, rc), eval_gen_config(rc),
                              rc.eval_batch);
  rec.cmp = compare(rec.scores.r2.f1, baseline_scores.r2.f1);
  rec.curve = tr.curve;

  for (const LatencyReport& base : baseline_latency) {
    LatencyReport lat = measure(pruned, bench_workload, base.batch_size, base.runs);
    rec.speedups.push_back(speedup(base, lat));
    rec.latency.push_back(lat);
  }
  if (!rec.speedups.empty()) rec.cmp.speedup = rec.speedups.front();
  return rec;
}

int worker_threads_from_env() {
  const char* env = std::getenv("ASYMPRUNE_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return std::clamp(n, 1, 16);
}

namespace {

std::string record_filename(const ExperimentRecord& rec) {
  return rec.scale_tag + "_e" + std::to_string(rec.spec.enc_keep) + "_d" +
         std::to_string(rec.spec.dec_keep) + ".rec";
}

struct VariantResult {
  ModelWeights weights;
  RougeScores scores;
  std::vector<TrainCurvePoint> curve;
};

}  // namespace

std::vector<ExperimentRecord> run_grid(const RunConfig& rc, const Corpus& corpus,
                                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  const bool persist = !out_dir.empty();
  if (persist) {
    fs::create_directories(fs::path(out_dir) / "records");
    fs::create_directories(fs::path(out_dir) / "checkpoints");
  }

  const Workload workload = make_bench_workload(
      corpus, rc, "bench:" + rc.task + ":" + std::to_string(rc.bench.pairs));

  std::vector<ExperimentRecord> all_records;
  std::map<std::string, CostModel> cost_by_scale;

  for (size_t scale_idx = 0; scale_idx < rc.scales.size(); ++scale_idx) {
    const ScaleConfig& sc = rc.scales[scale_idx];
    ModelConfig cfg = sc.config;
    cfg.vocab_size = corpus.vocab.size();
    if (rc.grid && cfg.n_enc_layers != cfg.n_dec_layers)
      throw std::invalid_argument("run_grid: scale '" + sc.tag +
                                  "' must have equal encoder/decoder depth");

    Hyperparams hyper = rc.hyper;
    hyper.seed = derive_seed(rc.hyper.seed, scale_idx, 1);
    ModelWeights baseline = init_model(cfg, derive_seed(rc.hyper.seed, scale_idx, 2));
    TrainResult base_train = train(baseline, corpus, hyper);

    if (persist)
      save_checkpoint(baseline, (fs::path(out_dir) / "checkpoints" /
                                 (sc.tag + "_baseline.ckpt")).string());

    const RougeScores base_scores =
        evaluate_rouge(baseline, eval_slice(corpus, rc), eval_gen_config(rc), rc.eval_batch);

    // Benchmarks run exclusively, before and after the (possibly parallel)
    // fine-tuning phase.
    std::vector<LatencyReport> base_latency;
    for (int bs : rc.bench.batch_sizes)
      base_latency.push_back(measure(baseline, workload, bs, rc.bench.runs));

    ExperimentRecord base_rec;
    base_rec.scale_tag = sc.tag;
    base_rec.spec = {cfg.n_enc_layers, cfg.n_dec_layers, RetainStrategy::EvenlySpaced};
    base_rec.scores = base_scores;
    base_rec.cmp = {100.0, 0.0, 1.0};
    base_rec.latency = base_latency;
    base_rec.speedups.assign(base_latency.size(), 1.0);
    base_rec.curve = base_train.curve;

    std::vector<ExperimentRecord> records{base_rec};

    if (rc.grid) {
      std::vector<PruneSpec> specs = enumerate_grid(cfg.n_enc_layers);
      specs.erase(specs.begin());  // baseline handled above

      // Phase 1: prune + fine-tune + evaluate (parallel across variants).
      std::vector<VariantResult> results(specs.size());
      std::vector<std::exception_ptr> errors(specs.size());
      std::atomic<size_t> next{0};
      auto work = [&]() {
        for (size_t i = next.fetch_add(1); i < specs.size(); i = next.fetch_add(1)) {
          try {
            ModelWeights pruned = prune(baseline, specs[i]);
            Hyperparams ft = rc.finetune;
            ft.seed = derive_seed(rc.hyper.seed, scale_idx, 100 + i);
            TrainResult tr = train(pruned, corpus, ft);
            results[i].scores = evaluate_rouge(pruned, eval_slice(corpus, rc),
                                               eval_gen_config(rc), rc.eval_batch);
            results[i].curve = tr.curve;
            results[i].weights = std::move(pruned);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      };
      const int workers = std::min<int>(worker_threads_from_env(),
                                        static_cast<int>(specs.size()));
      if (workers <= 1) {
        work();
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
      }
      for (size_t i = 0; i < specs.size(); ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

      // Phase 2: exclusive benchmark sweep, fixed order.
      for (size_t i = 0; i < specs.size(); ++i) {
        ExperimentRecord rec;
        rec.scale_tag = sc.tag;
        rec.spec = specs[i];
        rec.scores = results[i].scores;
        rec.cmp = compare(rec.scores.r2.f1, base_scores.r2.f1);
        rec.curve = results[i].curve;
        for (size_t b = 0; b < base_latency.size(); ++b) {
          LatencyReport lat = measure(results[i].weights, workload,
                                      base_latency[b].batch_size, rc.bench.runs);
          rec.speedups.push_back(speedup(base_latency[b], lat));
          rec.latency.push_back(lat);
        }
        rec.cmp.speedup = rec.speedups.front();
        if (persist)
          save_checkpoint(results[i].weights,
                          (fs::path(out_dir) / "checkpoints" /
                           (sc.tag + "_e" + std::to_string(specs[i].enc_keep) + "_d" +
                            std::to_string(specs[i].dec_keep) + ".ckpt")).string());
        records.push_back(std::move(rec));
      }
    }

    // Cost model over this scale's grid, per batch size.
    if (records.size() >= 4) {
      std::vector<CostMeasurement> ms;
      for (const ExperimentRecord& rec : records)
        for (const LatencyReport& lat : rec.latency)
          ms.push_back({rec.spec.enc_keep, rec.spec.dec_keep, lat.mean_steps,
                        lat.batch_size, lat.mean_ms});
      cost_by_scale[sc.tag] = fit_cost_model(ms);
    }

    for (ExperimentRecord& rec : records) {
      if (persist)
        save_record(rec, (fs::path(out_dir) / "records" / record_filename(rec)).string());
      all_records.push_back(std::move(rec));
    }
  }

  if (persist) {
    emit_report_bundle(out_dir, all_records, cost_by_scale);
    std::ofstream os(fs::path(out_dir) / "corpus_stats.md");
    os << render_corpus_stats_markdown(stats(corpus), rc.task);
  }
  return all_records;
}

std::vector<ScalePoint> run_scale_sweep(const RunConfig& rc, const Corpus& corpus,
                                        const std::string& out_dir) {
  if (rc.scales.size() < 2)
    throw std::invalid_argument("run_scale_sweep: need at least 2 scales");

  std::vector<ScalePoint> points;
  for (size_t scale_idx = 0; scale_idx < rc.scales.size(); ++scale_idx) {
    const ScaleConfig& sc = rc.scales[scale_idx];
    ModelConfig cfg = sc.config;
    cfg.vocab_size = corpus.vocab.size();

    ModelWeights model = init_model(cfg, derive_seed(rc.hyper.seed, scale_idx, 2));
    if (scale_idx > 0 && count_params_total(model) <= points.back().params)
      throw std::invalid_argument("run_scale_sweep: scales must be ordered by parameter "
                                  "count (offender: '" + sc.tag + "')");
    Hyperparams hyper = rc.hyper;
    hyper.seed = derive_seed(rc.hyper.seed, scale_idx, 1);
    train(model, corpus, hyper);

    ScalePoint pt;
    pt.tag = sc.tag;
    pt.params = count_params_total(model);
    pt.r2_f1 = evaluate_rouge(model, eval_slice(corpus, rc), eval_gen_config(rc),
                              rc.eval_batch)
                   .r2.f1;
    points.push_back(pt);
  }
  const double smallest = points.front().r2_f1;
  for (ScalePoint& pt : points)
    pt.gain_pct = smallest > 0 ? 100.0 * (pt.r2_f1 / smallest - 1.0) : 0.0;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / "sweep.csv");
    os << "scale,params,r2_f1,gain_pct\n";
    char buf[128];
    for (const ScalePoint& pt : points) {
      std::snprintf(buf, sizeof(buf), "%s,%lld,%.4f,%.4f\n", pt.tag.c_str(), pt.params,
                    pt.r2_f1, pt.gain_pct);
      os << buf;
    }
  }
  return points;
}

}  // namespace asymprune
