#pragma once

#include <map>
#include <string>
#include <vector>

#include "asymprune/bench.hpp"
#include "asymprune/corpus.hpp"
#include "asymprune/pipeline.hpp"

namespace asymprune {

// CSV with one row per (record, batch size):
// l_enc,l_dec,batch_size,mean_ms,std_ms,speedup,r2_score,recall_pct,impact_pct,genl
// Byte-deterministic for the same inputs; every cell is a stored record
// field printed with fixed formatting (r2_score comes from the fitted cost
// model of the record's scale).
std::string render_report_csv(const std::vector<ExperimentRecord>& records,
                              const std::map<std::string, CostModel>& cost_by_scale);

// One appendix-style markdown table per scale: layer counts, the four
// ROUGE F1 scores, GenL, recall R and impact.
std::string render_markdown_tables(const std::vector<ExperimentRecord>& records);

// Three (speedup, degradation%) series per scale, from batch-size-1
// measurements: decoder-only, encoder-only, both. Each series contains the
// baseline point (1.0, 0.0) and is sorted by speedup. Keys are file names,
// values CSV bodies. Throws when a record lacks batch-size-1 latency.
std::map<std::string, std::string> render_curves(
    const std::vector<ExperimentRecord>& records);

std::string render_corpus_stats_markdown(const CorpusStats& stats,
                                         const std::string& name);

// Writes report.csv, report.md and the curve files into out_dir.
void emit_report_bundle(const std::string& out_dir,
                        const std::vector<ExperimentRecord>& records,
                        const std::map<std::string, CostModel>& cost_by_scale);

}  // namespace asymprune
