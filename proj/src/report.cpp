#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "lssa/harness.hpp"
#include "lssa/io.hpp"

namespace lssa {
namespace fs = std::filesystem;

namespace {

using CsvRow = std::map<std::string, std::string>;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::vector<CsvRow> read_csv(const fs::path& path) {
  require(fs::exists(path), ErrorCode::kMissingArtifact, "missing artifact: " + path.string());
  std::istringstream in(io::read_text(path));
  std::string line;
  std::getline(in, line);
  const auto header = split(line, ',');
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    CsvRow row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_to_markdown(const fs::path& path) {
  std::istringstream in(io::read_text(path));
  std::ostringstream md;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    md << '|';
    for (const auto& c : cells) md << ' ' << c << " |";
    md << '\n';
    if (first) {
      md << '|';
      for (std::size_t i = 0; i < cells.size(); ++i) md << "---|";
      md << '\n';
      first = false;
    }
  }
  return md.str();
}

const CsvRow* find_summary(const std::vector<CsvRow>& rows, const std::string& source, const std::string& attack,
                           const std::string& target) {
  for (const auto& r : rows) {
    if (r.at("source") == source && r.at("attack") == attack && r.at("target") == target) return &r;
  }
  return nullptr;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    }
    return out.str();
  }

  std::string markdown() const {
    std::ostringstream out;
    out << '|';
    for (const auto& h : header) out << ' ' << h << " |";
    out << "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& r : rows) {
      out << '|';
      for (const auto& c : r) out << ' ' << c << " |";
      out << '\n';
    }
    return out.str();
  }
};

// Rows (source, attack); per target the mean R@1 ASRs, white-box starred.
Table transfer_table(const ExperimentConfig& config, const std::vector<CsvRow>& summary,
                     const std::vector<std::pair<std::string, std::string>>& attacks) {
  Table t;
  t.header = {"source", "attack"};
  for (const auto& m : config.models) {
    t.header.push_back(m.tag() + " TR R@1");
    t.header.push_back(m.tag() + " IR R@1");
  }
  for (const auto& source : config.sources) {
    for (const auto& [pipeline, label] : attacks) {
      std::vector<std::string> row{source, label};
      bool any = false;
      for (const auto& m : config.models) {
        const CsvRow* r = find_summary(summary, source, pipeline, m.tag());
        const std::string star = m.tag() == source ? "*" : "";
        row.push_back(r ? r->at("asr_tr_r1_mean") + star : "");
        row.push_back(r ? r->at("asr_ir_r1_mean") + star : "");
        any = any || r != nullptr;
      }
      if (any) t.rows.push_back(std::move(row));
    }
  }
  return t;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", x);
  return buf;
}

}  // namespace

Image perturbation_panel(const Image& v, const Image& v_adv, double amplification) {
  require_same_shape(v, v_adv, "perturbation_panel");
  Image out = v;
  out.array() = (0.5 + amplification * (v_adv.array() - v.array())).max(0.0).min(1.0);
  return out;
}

Image triptych(const Image& v, const Image& v_adv, double amplification) {
  const Image p = perturbation_panel(v, v_adv, amplification);
  const int w = v.width();
  Image out(v.channels(), v.height(), 3 * w);
  for (int c = 0; c < v.channels(); ++c) {
    out.plane(c).leftCols(w) = v.plane(c);
    out.plane(c).middleCols(w, w) = v_adv.plane(c);
    out.plane(c).rightCols(w) = p.plane(c);
  }
  return out;
}

std::string caption_diff(const Vocabulary& vocab, const TokenSequence& original, const TokenSequence& adversarial) {
  require(original.size() == adversarial.size(), ErrorCode::kShapeMismatch, "caption_diff needs equal lengths");
  std::string out;
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    if (original[i] == adversarial[i]) {
      out += vocab.token(original[i]);
    } else {
      out += "[" + vocab.token(original[i]) + " -> " + vocab.token(adversarial[i]) + "]";
    }
  }
  return out;
}

std::string svg_line_plot(const std::string& title, const std::vector<std::string>& x_labels,
                          const std::vector<PlotSeries>& series, const std::string& y_label) {
  constexpr double kW = 520, kH = 340, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  double lo = 1e300, hi = -1e300;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      if (!std::isfinite(s.mean[i])) continue;
      const double sd = i < s.stddev.size() ? s.stddev[i] : 0.0;
      lo = std::min(lo, s.mean[i] - sd);
      hi = std::max(hi, s.mean[i] + sd);
    }
  }
  if (lo > hi) {
    lo = 0.0;
    hi = 100.0;
  }
  if (hi - lo < 1.0) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const std::size_t n = x_labels.size();
  auto x_at = [&](std::size_t i) {
    return n <= 1 ? kLeft + (kW - kLeft - kRight) / 2 : kLeft + (kW - kLeft - kRight) * i / static_cast<double>(n - 1);
  };
  auto y_at = [&](double y) { return kTop + (kH - kTop - kBottom) * (hi - y) / (hi - lo); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << svg_escape(title)
      << "</text>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\""
      << kH - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = lo + (hi - lo) * t / 4.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(y_at(y) + 4) << "\" text-anchor=\"end\" font-size=\"10\">"
        << num(y) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    svg << "<text x=\"" << num(x_at(i)) << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << svg_escape(x_labels[i]) << "</text>\n";
  }
  svg << "<text x=\"14\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 14 " << kH / 2
      << ")\" text-anchor=\"middle\" font-size=\"11\">" << svg_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 4];
    std::ostringstream points;
    for (std::size_t i = 0; i < series[s].mean.size() && i < n; ++i) {
      const double m = series[s].mean[i];
      if (!std::isfinite(m)) continue;
      const double sd = i < series[s].stddev.size() ? series[s].stddev[i] : 0.0;
      points << num(x_at(i)) << ',' << num(y_at(m)) << ' ';
      svg << "<line x1=\"" << num(x_at(i)) << "\" y1=\"" << num(y_at(m - sd)) << "\" x2=\"" << num(x_at(i))
          << "\" y2=\"" << num(y_at(m + sd)) << "\" stroke=\"" << color << "\"/>\n";
      svg << "<circle cx=\"" << num(x_at(i)) << "\" cy=\"" << num(y_at(m)) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"" << points.str() << "\"/>\n";
    svg << "<text x=\"" << kW - kRight - 80 << "\" y=\"" << kTop + 14 * s << "\" font-size=\"11\" fill=\"" << color
        << "\">" << svg_escape(series[s].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void cmd_report(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const ArtifactGraph graph = build_artifact_graph(config);
  const RunPaths paths{config.output_dir};
  const auto& eval = graph.node("eval");
  require(fs::exists(eval.path / "baseline.csv"), ErrorCode::kMissingArtifact,
          "missing artifact: " + (eval.path / "baseline.csv").string() + " (run `lssa-lab eval` first)");
  require(graph.is_fresh("eval"), ErrorCode::kMissingArtifact,
          "stale artifact: " + eval.path.string() + " is older than its inputs; rerun `lssa-lab eval`");

  const fs::path out = paths.report();
  fs::remove_all(out);
  fs::create_directories(out);
  std::ostringstream md;
  md << "# LSSA lab report\n\n";
  md << "## Clean retrieval (test split, %)\n\n" << csv_to_markdown(paths.eval() / "baseline.csv") << '\n';
  fs::copy_file(paths.eval() / "baseline.csv", out / "baseline.csv");

  const auto summary = read_csv(paths.eval() / "summary.csv");
  if (!config.pipelines.empty()) {
    std::vector<std::pair<std::string, std::string>> attacks;
    for (const auto& p : config.pipelines) attacks.emplace_back(p, p);
    const Table table = transfer_table(config, summary, attacks);
    io::write_text(out / "transfer_table.csv", table.csv());
    io::write_text(out / "transfer_table.md", table.markdown());
    md << "## Attack success rate, mean over " << config.seeds.size() << " seeds (%)\n\n"
       << "Rows are crafting (source) models; * marks white-box cells.\n\n"
       << table.markdown() << '\n';

    const std::vector<std::pair<std::string, std::string>> ladder_rows = {
        {"sga_it", "SGA2"},
        {"sga_it_sampled", "SGA2+SA"},
        {"sga_it_shuffled", "SGA2+LS"},
        {"sga_it_sampled_shuffled", "SGA2+SA+LS"},
        {"lssa", "LSSA"},
    };
    const Table ladder = transfer_table(config, summary, ladder_rows);
    if (!ladder.rows.empty()) {
      io::write_text(out / "ladder.csv", ladder.csv());
      io::write_text(out / "ladder.md", ladder.markdown());
      md << "## Ablation ladder\n\nSA = sampled text stage, LS = local shuffle; LSSA adds momentum.\n\n"
         << ladder.markdown() << '\n';
    }
  }

  const bool have_samples = config.report.triptych_pairs > 0 && !config.sources.empty() &&
                            std::find(config.pipelines.begin(), config.pipelines.end(), config.report.pipeline) !=
                                config.pipelines.end();
  if (have_samples) {
    const Dataset dataset = load_dataset(paths.data());
    const std::string source = config.sources.front();
    const std::uint64_t seed = config.seeds.front();
    const auto outcomes = load_outcomes(paths.attack(source, config.report.pipeline, seed));
    const std::size_t count = std::min<std::size_t>(outcomes.size(), static_cast<std::size_t>(config.report.triptych_pairs));
    md << "## Examples: " << config.report.pipeline << " on " << source << ", seed " << seed << "\n\n"
       << "Panels: original, adversarial, perturbation amplified " << config.report.amplification
       << "x around mid-gray.\n\n";
    std::ostringstream diffs;
    for (std::size_t i = 0; i < count; ++i) {
      const AttackOutcome& o = outcomes[i];
      const CaptionedImage& item = dataset.pair(o.pair_id);
      const std::string name = "pair_" + std::to_string(o.pair_id) + ".png";
      io::write_png(out / "triptychs" / name, triptych(item.image, o.v_adv, config.report.amplification));
      md << "![pair " << o.pair_id << "](triptychs/" << name << ")\n\n";
      diffs << "### pair " << o.pair_id << "\n\n";
      for (std::size_t c = 0; c < item.captions.size(); ++c) {
        diffs << "- " << caption_diff(dataset.vocab, item.captions[c], o.t_adv[c]) << '\n';
      }
      diffs << '\n';
      md << "Captions:\n\n";
      for (std::size_t c = 0; c < item.captions.size(); ++c) {
        md << "- " << caption_diff(dataset.vocab, item.captions[c], o.t_adv[c]) << '\n';
      }
      md << '\n';
    }
    io::write_text(out / "caption_diffs.md", "# Caption diffs\n\n" + diffs.str());
  }

  for (const auto& a : config.ablations) {
    const std::string node = "ablate/" + a.name;
    if (!graph.is_fresh(node)) {
      md << "## Ablation " << a.name << "\n\nNot run (use `lssa-lab ablate`).\n\n";
      continue;
    }
    const fs::path sweep = paths.ablation(a.name) / "sweep.csv";
    md << "## Ablation " << a.name << " (" << a.pipeline << ")\n\n" << csv_to_markdown(sweep) << '\n';
    for (const auto& m : config.models) {
      md << "![" << a.name << " on " << m.tag() << "](../ablate/" << a.name << "/plot_" << m.tag() << ".svg)\n\n";
    }
  }
  io::write_text(out / "report.md", md.str());
  graph.mark_built("report");
  if (options.verbose) std::cerr << "[lssa-lab] wrote report to " << out.string() << std::endl;
}

}  // namespace lssa
