#include "asymprune/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace asymprune {

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::vector<std::string> scale_order(const std::vector<ExperimentRecord>& records) {
  std::vector<std::string> order;
  for (const auto& rec : records)
    if (std::find(order.begin(), order.end(), rec.scale_tag) == order.end())
      order.push_back(rec.scale_tag);
  return order;
}

}  // namespace

std::string render_report_csv(const std::vector<ExperimentRecord>& records,
                              const std::map<std::string, CostModel>& cost_by_scale) {
  std::string out =
      "l_enc,l_dec,batch_size,mean_ms,std_ms,speedup,r2_score,recall_pct,impact_pct,"
      "genl\n";
  for (const auto& rec : records) {
    for (size_t i = 0; i < rec.latency.size(); ++i) {
      const LatencyReport& lat = rec.latency[i];
      double r2 = 0.0;
      auto it = cost_by_scale.find(rec.scale_tag);
      if (it != cost_by_scale.end()) {
        auto bs_it = it->second.per_batch_size.find(lat.batch_size);
        if (bs_it != it->second.per_batch_size.end()) r2 = bs_it->second.r2;
      }
      const double sp = i < rec.speedups.size() ? rec.speedups[i] : 1.0;
      out += std::to_string(rec.spec.enc_keep) + "," +
             std::to_string(rec.spec.dec_keep) + "," + std::to_string(lat.batch_size) +
             "," + fmt("%.3f", lat.mean_ms) + "," + fmt("%.3f", lat.std_ms) + "," +
             fmt("%.4f", sp) + "," + fmt("%.4f", r2) + "," +
             fmt("%.4f", rec.cmp.recall_pct) + "," + fmt("%.4f", rec.cmp.impact_pct) +
             "," + fmt("%.4f", rec.scores.genl) + "\n";
    }
  }
  return out;
}

std::string render_markdown_tables(const std::vector<ExperimentRecord>& records) {
  std::string out;
  for (const std::string& tag : scale_order(records)) {
    out += "## Scale: " + tag + "\n\n";
    out += "| l_enc | l_dec | R-1 | R-2 | RSL | R-L | GenL | R | Impact |\n";
    out += "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& rec : records) {
      if (rec.scale_tag != tag) continue;
      out += "| " + std::to_string(rec.spec.enc_keep) + " | " +
             std::to_string(rec.spec.dec_keep) + " | " + fmt("%.4f", rec.scores.r1.f1) +
             " | " + fmt("%.4f", rec.scores.r2.f1) + " | " +
             fmt("%.4f", rec.scores.rlsum.f1) + " | " + fmt("%.4f", rec.scores.rl.f1) +
             " | " + fmt("%.2f", rec.scores.genl) + " | " +
             fmt("%.2f", rec.cmp.recall_pct) + "% | " + fmt("%.2f", rec.cmp.impact_pct) +
             "% |\n";
    }
    out += "\n";
  }
  return out;
}

std::map<std::string, std::string> render_curves(
    const std::vector<ExperimentRecord>& records) {
  std::map<std::string, std::string> files;
  for (const std::string& tag : scale_order(records)) {
    // Determine the full depth from the baseline record of this scale.
    int full = 0;
    for (const auto& rec : records)
      if (rec.scale_tag == tag)
        full = std::max(full, std::max(rec.spec.enc_keep, rec.spec.dec_keep));

    struct Point {
      double speedup, degradation;
    };
    std::vector<Point> dec_series, enc_series, both_series;
    for (const auto& rec : records) {
      if (rec.scale_tag != tag) continue;
      bool has_bs1 = false;
      double sp = 1.0;
      for (size_t i = 0; i < rec.latency.size(); ++i) {
        if (rec.latency[i].batch_size == 1) {
          has_bs1 = true;
          sp = i < rec.speedups.size() ? rec.speedups[i] : 1.0;
        }
      }
      if (!has_bs1)
        throw std::runtime_error("emit_curves: record " + tag + " (" +
                                 std::to_string(rec.spec.enc_keep) + "," +
                                 std::to_string(rec.spec.dec_keep) +
                                 ") missing batch-size-1 latency data");
      const Point pt{sp, rec.cmp.impact_pct};
      const bool enc_pruned = rec.spec.enc_keep < full;
      const bool dec_pruned = rec.spec.dec_keep < full;
      if (!enc_pruned && !dec_pruned) {
        // Baseline belongs to every series.
        dec_series.push_back(pt);
        enc_series.push_back(pt);
        both_series.push_back(pt);
      } else if (!enc_pruned) {
        dec_series.push_back(pt);
      } else if (!dec_pruned) {
        enc_series.push_back(pt);
      } else {
        both_series.push_back(pt);
      }
    }

    auto emit = [&files, &tag](const char* series, std::vector<Point>& pts) {
      std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.speedup != b.speedup ? a.speedup < b.speedup
                                      : a.degradation < b.degradation;
      });
      std::string body = "speedup,degradation_pct\n";
      for (const Point& p : pts)
        body += fmt("%.4f", p.speedup) + "," + fmt("%.4f", p.degradation) + "\n";
      files["curve_" + tag + "_" + series + ".csv"] = body;
    };
    emit("decoder", dec_series);
    emit("encoder", enc_series);
    emit("both", both_series);
  }
  return files;
}

std::string render_corpus_stats_markdown(const CorpusStats& stats,
                                         const std::string& name) {
  std::string out;
  out += "| Dataset | Train | Validation | Test | Source | Summary | Compression |\n";
  out += "|---|---|---|---|---|---|---|\n";
  out += "| " + name + " | " + std::to_string(stats.n_train) + " | " +
         std::to_string(stats.n_valid) + " | " + std::to_string(stats.n_test) + " | " +
         fmt("%.2f", stats.mean_source_len) + " | " + fmt("%.2f", stats.mean_summary_len) +
         " | " + fmt("%.2f", stats.compression_factor) + " |\n";
  return out;
}

void emit_report_bundle(const std::string& out_dir,
                        const std::vector<ExperimentRecord>& records,
                        const std::map<std::string, CostModel>& cost_by_scale) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write = [&out_dir](const std::string& name, const std::string& content) {
    std::ofstream os(fs::path(out_dir) / name, std::ios::binary);
    if (!os) throw std::runtime_error("report: cannot write " + name);
    os << content;
  };
  write("report.csv", render_report_csv(records, cost_by_scale));
  write("report.md", render_markdown_tables(records));
  for (const auto& [name, body] : render_curves(records)) write(name, body);
}

}  // namespace asymprune
