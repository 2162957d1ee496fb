// Command-line driver for the asymmetric-pruning experiment engine.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "asymprune/checkpoint.hpp"
#include "asymprune/pipeline.hpp"
#include "asymprune/report.hpp"

namespace fs = std::filesystem;
using namespace asymprune;

namespace {

struct GlobalOpts {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
};

RunConfig load_config(const GlobalOpts& g) {
  if (g.config.empty()) throw std::runtime_error("missing --config");
  RunConfig rc = parse_run_config(g.config);
  if (g.seed) {
    rc.hyper.seed = *g.seed;
    rc.finetune.seed = *g.seed;
  }
  return rc;
}

const ScaleConfig& pick_scale(const RunConfig& rc, const std::string& tag) {
  if (tag.empty()) return rc.scales.front();
  for (const ScaleConfig& sc : rc.scales)
    if (sc.tag == tag) return sc;
  throw std::runtime_error("unknown scale '" + tag + "'");
}

// One summary per line; lines with a tab are TSV pairs and contribute the
// field after the tab.
std::vector<std::string> read_summary_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    const size_t tab = line.find('\t');
    out.push_back(tab == std::string::npos ? line : line.substr(tab + 1));
  }
  return out;
}

std::vector<int> tokenize_with(Vocab& vocab, const std::string& text) {
  std::vector<int> ids;
  std::istringstream is(text);
  std::string w;
  while (is >> w) ids.push_back(vocab.add(w));
  return ids;
}

int cmd_train(const GlobalOpts& g, const std::string& scale_tag) {
  RunConfig rc = load_config(g);
  if (g.out.empty()) throw std::runtime_error("missing --out");
  Corpus corpus = build_corpus(rc);
  ModelConfig cfg = pick_scale(rc, scale_tag).config;
  cfg.vocab_size = corpus.vocab.size();
  ModelWeights model = init_model(cfg, rc.hyper.seed);
  TrainResult tr = train(model, corpus, rc.hyper);
  fs::create_directories(g.out);
  save_checkpoint(model, (fs::path(g.out) / "model.ckpt").string());
  std::ofstream os(fs::path(g.out) / "train_curve.csv");
  os << "step,loss\n";
  for (const auto& p : tr.curve) os << p.step << "," << p.loss << "\n";
  std::printf("trained %d optimizer steps, best validation loss %.6f\n",
              tr.optimizer_steps, tr.best_valid_loss);
  std::printf("checkpoint: %s\n", (fs::path(g.out) / "model.ckpt").string().c_str());
  return 0;
}

int cmd_prune(const GlobalOpts& g, const std::string& ckpt, int enc_keep, int dec_keep,
              const std::string& strategy) {
  if (g.out.empty()) throw std::runtime_error("missing --out");
  ModelWeights model = load_checkpoint(ckpt);
  PruneSpec spec{enc_keep, dec_keep, strategy_from_string(strategy)};
  ModelWeights pruned = prune(model, spec);
  save_checkpoint(pruned, g.out);
  std::printf("pruned to enc_keep=%d dec_keep=%d (%s), %lld -> %lld parameters\n",
              enc_keep, dec_keep, strategy.c_str(), count_params_total(model),
              count_params_total(pruned));
  return 0;
}

int cmd_finetune(const GlobalOpts& g, const std::string& ckpt) {
  RunConfig rc = load_config(g);
  if (g.out.empty()) throw std::runtime_error("missing --out");
  Corpus corpus = build_corpus(rc);
  ModelWeights model = load_checkpoint(ckpt);
  if (model.config.vocab_size != corpus.vocab.size())
    throw std::runtime_error("checkpoint vocab does not match corpus vocab");
  TrainResult tr = train(model, corpus, rc.finetune);
  save_checkpoint(model, g.out);
  std::printf("fine-tuned %d optimizer steps, best validation loss %.6f\n",
              tr.optimizer_steps, tr.best_valid_loss);
  return 0;
}

int cmd_generate(const GlobalOpts& g, const std::string& ckpt, const std::string& input,
                 int max_new) {
  RunConfig rc = load_config(g);
  if (g.out.empty()) throw std::runtime_error("missing --out");
  Corpus corpus = build_corpus(rc);
  ModelWeights model = load_checkpoint(ckpt);

  std::ifstream is(input);
  if (!is) throw std::runtime_error("cannot open: " + input);
  std::vector<std::vector<int>> inputs;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<int> ids;
    std::istringstream ls(line);
    std::string w;
    while (ls >> w) ids.push_back(corpus.vocab.id_or_unk(w));
    if (!ids.empty()) inputs.push_back(std::move(ids));
  }
  if (inputs.empty()) throw std::runtime_error("no input sequences in " + input);

  GenerationConfig gen;
  gen.max_new_tokens = max_new > 0 ? max_new : rc.max_new_tokens;
  GenerationResult res = generate(model, inputs, gen);

  std::ofstream os(g.out);
  if (!os) throw std::runtime_error("cannot open for write: " + g.out);
  for (const auto& seq : res.tokens) {
    const std::vector<int> content = strip_generation(seq, gen);
    for (size_t i = 0; i < content.size(); ++i)
      os << (i ? " " : "") << corpus.vocab.word(content[i]);
    os << '\n';
  }
  std::printf("generated %zu sequences, mean GenL %.2f\n", inputs.size(),
              mean_genl({res.trace}));
  return 0;
}

int cmd_evaluate(const std::string& ref_path, const std::string& hyp_path) {
  const auto refs = read_summary_lines(ref_path);
  const auto hyps = read_summary_lines(hyp_path);
  if (refs.size() != hyps.size())
    throw std::runtime_error("evaluate: line count mismatch (" +
                             std::to_string(refs.size()) + " refs vs " +
                             std::to_string(hyps.size()) + " hyps)");
  if (refs.empty()) throw std::runtime_error("evaluate: empty files");

  Vocab vocab = Vocab::with_specials();
  Prf r1{}, r2{}, rl{}, rlsum{};
  for (size_t i = 0; i < refs.size(); ++i) {
    const std::vector<int> ref = tokenize_with(vocab, refs[i]);
    const std::vector<int> hyp = tokenize_with(vocab, hyps[i]);
    auto add = [](Prf& into, const Prf& x) {
      into.p += x.p;
      into.r += x.r;
      into.f1 += x.f1;
    };
    add(r1, rouge_n(hyp, ref, 1));
    add(r2, rouge_n(hyp, ref, 2));
    add(rl, rouge_l_sentence(hyp, ref));
    add(rlsum, rouge_lsum({hyp}, {ref}));
  }
  const double n = static_cast<double>(refs.size());
  std::printf("metric,precision,recall,f1\n");
  std::printf("rouge1,%.4f,%.4f,%.4f\n", r1.p / n, r1.r / n, r1.f1 / n);
  std::printf("rouge2,%.4f,%.4f,%.4f\n", r2.p / n, r2.r / n, r2.f1 / n);
  std::printf("rougeL,%.4f,%.4f,%.4f\n", rl.p / n, rl.r / n, rl.f1 / n);
  std::printf("rougeLsum,%.4f,%.4f,%.4f\n", rlsum.p / n, rlsum.r / n, rlsum.f1 / n);
  return 0;
}

int cmd_benchmark(const GlobalOpts& g, const std::string& ckpt) {
  RunConfig rc = load_config(g);
  Corpus corpus = build_corpus(rc);
  ModelWeights model = load_checkpoint(ckpt);
  Workload wl = make_bench_workload(corpus, rc, "bench:" + rc.task);

  std::string csv = "batch_size,mean_ms,std_ms,encoder_share,decoder_share,mean_steps\n";
  for (int bs : rc.bench.batch_sizes) {
    LatencyReport rep = measure(model, wl, bs, rc.bench.runs);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.3f,%.3f,%.4f,%.4f,%.2f\n", rep.batch_size,
                  rep.mean_ms, rep.std_ms, rep.encoder_share, rep.decoder_share,
                  rep.mean_steps);
    csv += buf;
  }
  std::fputs(csv.c_str(), stdout);
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    std::ofstream os(fs::path(g.out) / "bench.csv");
    os << csv;
  }
  return 0;
}

int cmd_grid(const GlobalOpts& g) {
  RunConfig rc = load_config(g);
  if (g.out.empty()) throw std::runtime_error("missing --out");
  Corpus corpus = build_corpus(rc);
  const auto records = run_grid(rc, corpus, g.out);
  std::printf("grid complete: %zu records in %s\n", records.size(), g.out.c_str());
  return 0;
}

int cmd_sweep(const GlobalOpts& g) {
  RunConfig rc = load_config(g);
  if (g.out.empty()) throw std::runtime_error("missing --out");
  Corpus corpus = build_corpus(rc);
  const auto points = run_scale_sweep(rc, corpus, g.out);
  std::printf("scale,params,r2_f1,gain_pct\n");
  for (const auto& pt : points)
    std::printf("%s,%lld,%.4f,%.4f\n", pt.tag.c_str(), pt.params, pt.r2_f1, pt.gain_pct);
  return 0;
}

int cmd_report(const std::string& runs_dir, std::string out_dir) {
  if (out_dir.empty()) out_dir = runs_dir;
  const auto records = load_records_dir((fs::path(runs_dir) / "records").string());
  if (records.empty()) throw std::runtime_error("no records found under " + runs_dir);

  // The cost model is refit from the stored latency measurements.
  std::map<std::string, CostModel> cost;
  std::map<std::string, std::vector<CostMeasurement>> by_scale;
  for (const auto& rec : records)
    for (const auto& lat : rec.latency)
      by_scale[rec.scale_tag].push_back({rec.spec.enc_keep, rec.spec.dec_keep,
                                         lat.mean_steps, lat.batch_size, lat.mean_ms});
  for (const auto& [tag, ms] : by_scale) {
    std::set<std::pair<int, int>> distinct;
    for (const auto& m : ms) distinct.insert({m.l_enc, m.l_dec});
    if (distinct.size() >= 4) cost[tag] = fit_cost_model(ms);
  }
  emit_report_bundle(out_dir, records, cost);
  std::printf("report written to %s (%zu records)\n", out_dir.c_str(), records.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymmetric encoder/decoder pruning experiments"};
  app.require_subcommand(1);

  GlobalOpts g;
  uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    if (with_config) sub->add_option("--config", g.config, "experiment config file");
    sub->add_option("--out", g.out, "output path");
    sub->add_option("--seed", seed_value, "override the experiment seed")
        ->each([&](const std::string&) { g.seed = seed_value; });
  };

  auto* train_cmd = app.add_subcommand("train", "train a baseline model");
  std::string scale_tag;
  train_cmd->add_option("--scale", scale_tag, "scale tag (default: first)");
  add_common(train_cmd);

  auto* prune_cmd = app.add_subcommand("prune", "remove layers from a checkpoint");
  std::string ckpt, strategy = "evenly";
  int enc_keep = 0, dec_keep = 0;
  prune_cmd->add_option("--checkpoint", ckpt, "input checkpoint")->required();
  prune_cmd->add_option("--enc-keep", enc_keep, "encoder layers kept")->required();
  prune_cmd->add_option("--dec-keep", dec_keep, "decoder layers kept")->required();
  prune_cmd->add_option("--strategy", strategy, "evenly|first_k|last_k");
  add_common(prune_cmd, false);

  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a checkpoint");
  ft_cmd->add_option("--checkpoint", ckpt, "input checkpoint")->required();
  add_common(ft_cmd);

  auto* gen_cmd = app.add_subcommand("generate", "greedy generation from a checkpoint");
  std::string input_path;
  int max_new = 0;
  gen_cmd->add_option("--checkpoint", ckpt, "input checkpoint")->required();
  gen_cmd->add_option("--input", input_path, "one source per line")->required();
  gen_cmd->add_option("--max-new", max_new, "max new tokens");
  add_common(gen_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "ROUGE between two files");
  std::string ref_path, hyp_path;
  eval_cmd->add_option("--ref", ref_path, "reference file")->required();
  eval_cmd->add_option("--hyp", hyp_path, "hypothesis file")->required();

  auto* bench_cmd = app.add_subcommand("benchmark", "latency measurement");
  bench_cmd->add_option("--checkpoint", ckpt, "input checkpoint")->required();
  add_common(bench_cmd);

  auto* grid_cmd = app.add_subcommand("grid", "full shrink-then-fine-tune grid");
  add_common(grid_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "scale sweep");
  add_common(sweep_cmd);

  auto* report_cmd = app.add_subcommand("report", "re-emit reports from records");
  std::string runs_dir;
  report_cmd->add_option("--runs", runs_dir, "run directory")->required();
  report_cmd->add_option("--out", g.out, "output directory (default: run dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    std::fputs(app.help().c_str(), stderr);
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(g, scale_tag);
    if (prune_cmd->parsed()) return cmd_prune(g, ckpt, enc_keep, dec_keep, strategy);
    if (ft_cmd->parsed()) return cmd_finetune(g, ckpt);
    if (gen_cmd->parsed()) return cmd_generate(g, ckpt, input_path, max_new);
    if (eval_cmd->parsed()) return cmd_evaluate(ref_path, hyp_path);
    if (bench_cmd->parsed()) return cmd_benchmark(g, ckpt);
    if (grid_cmd->parsed()) return cmd_grid(g);
    if (sweep_cmd->parsed()) return cmd_sweep(g);
    if (report_cmd->parsed()) return cmd_report(runs_dir, g.out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
