#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rmts/errors.hpp"
#include "rmts/experiment_runner.hpp"

namespace rmts {

namespace {

std::string fmt3(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3) << v;
  return out.str();
}

std::string fmt_delta(double points) {
  std::ostringstream out;
  out << "(" << (points >= 0 ? "+" : "") << std::fixed << std::setprecision(1)
      << points << ")";
  return out.str();
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Column layout for the trait table: abbreviations in the paper's display
// order (prediction order reversed), then AVG (SD).
struct TraitColumns {
  std::vector<std::string> names;    // canonical trait names
  std::vector<std::string> labels;   // abbreviations
};

TraitColumns trait_columns(const RunReport& report, const DatasetSpec* spec) {
  TraitColumns cols;
  if (spec) {
    for (const auto& name : spec->display_trait_order()) {
      cols.names.push_back(name);
      std::string abbrev = name;
      for (const auto& [id, p] : spec->prompts)
        if (const TraitSpec* t = p.find_trait(name)) {
          abbrev = t->abbrev;
          break;
        }
      cols.labels.push_back(abbrev);
    }
  } else {
    for (const auto& [trait, v] : report.aggregate.per_trait) {
      cols.names.push_back(trait);
      cols.labels.push_back(trait);
    }
    std::reverse(cols.names.begin(), cols.names.end());
    std::reverse(cols.labels.begin(), cols.labels.end());
  }
  return cols;
}

void write_trait_table(const RunReport& report, const DatasetSpec* spec,
                       std::ostream& out) {
  TraitColumns cols = trait_columns(report, spec);
  const std::size_t w = 14;

  out << "Average QWK per trait (prediction order: <-, rightmost first)\n\n";
  out << pad("model", 24);
  for (const auto& label : cols.labels) out << pad(label, w);
  out << pad("AVG (SD)", w) << "\n";

  std::string model = report.plan.backend.backend_id;
  if (report.plan.mode != InputMode::essay_only) {
    model += " +rationale(" + report.plan.generator_id + ")";
    if (report.plan.compressed) model += "+C";
  }
  if (!report.plan.ablated_trait.empty())
    model += " -" + report.plan.ablated_trait;

  out << pad(model, 24);
  for (const auto& name : cols.names) {
    auto it = report.aggregate.per_trait.find(name);
    out << pad(it == report.aggregate.per_trait.end() ? "-" : fmt3(it->second), w);
  }
  out << fmt3(report.aggregate.avg) << " (" << fmt3(report.aggregate.fold_sd) << ")\n";

  if (report.has_deltas) {
    out << pad("  (+%) vs baseline", 24);
    for (const auto& name : cols.names) {
      auto it = report.delta_per_trait.find(name);
      out << pad(it == report.delta_per_trait.end() ? "" : fmt_delta(it->second), w);
    }
    out << fmt_delta(report.delta_avg) << "\n";
  }
}

void write_prompt_table(const RunReport& report, std::ostream& out) {
  if (report.aggregate.per_prompt.empty()) return;
  const std::size_t w = 14;
  out << "\nAverage QWK per prompt\n\n";
  out << pad("prompt", 24);
  for (const auto& [prompt_id, v] : report.aggregate.per_prompt)
    out << pad(std::to_string(prompt_id), w);
  out << "\n" << pad("qwk", 24);
  for (const auto& [prompt_id, v] : report.aggregate.per_prompt) out << pad(fmt3(v), w);
  out << "\n";
  if (report.has_deltas && !report.delta_per_prompt.empty()) {
    out << pad("  (+%) vs baseline", 24);
    for (const auto& [prompt_id, v] : report.aggregate.per_prompt) {
      auto it = report.delta_per_prompt.find(prompt_id);
      out << pad(it == report.delta_per_prompt.end() ? "" : fmt_delta(it->second), w);
    }
    out << "\n";
  }
}

void write_parse_stats(const RunReport& report, std::ostream& out) {
  out << "\nparse failure rate: " << fmt3(report.parse_failure_rate) << "\n";
}

// Minimal static-SVG bar chart.
void write_bar_chart_svg(const std::filesystem::path& file, const std::string& title,
                         const std::vector<std::pair<std::string, double>>& bars) {
  const int bar_w = 46, gap = 14, height = 320, top = 40, bottom = 60;
  const int width = std::max<int>(320, 60 + static_cast<int>(bars.size()) * (bar_w + gap));
  const int plot_h = height - top - bottom;

  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + file.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"50\" y1=\"" << top << "\" x2=\"50\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"50\" y1=\"" << top + plot_h << "\" x2=\"" << width - 10
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    double v = 0.25 * tick;
    int y = top + plot_h - static_cast<int>(v * plot_h);
    out << "<text x=\"44\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt3(v) << "</text>\n";
  }
  int x = 60;
  for (const auto& [label, value] : bars) {
    double clamped = std::max(0.0, std::min(1.0, value));
    int h = static_cast<int>(clamped * plot_h);
    out << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w
        << "\" height=\"" << h << "\" fill=\"#4878a8\"/>\n";
    out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + plot_h - h - 4
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt3(value) << "</text>\n";
    out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + plot_h + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << label << "</text>\n";
    x += bar_w + gap;
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const RunReport& report,
                                               ReportFormat format,
                                               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;

  // The trait-config path is absent for externally-sourced reports.
  std::optional<DatasetSpec> spec;
  if (report.plan.trait_config != "-" && !report.plan.trait_config.empty() &&
      std::filesystem::exists(report.plan.trait_config))
    spec = DatasetSpec::load(report.plan.trait_config);

  if (format == ReportFormat::table) {
    auto table_file = out_dir / "report_table.txt";
    std::ofstream out(table_file, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + table_file.string());
    write_trait_table(report, spec ? &*spec : nullptr, out);
    write_prompt_table(report, out);
    write_parse_stats(report, out);
    files.push_back(table_file);

    auto json_file = out_dir / "report.json";
    report.save(json_file);
    files.push_back(json_file);
  } else {
    TraitColumns cols = trait_columns(report, spec ? &*spec : nullptr);
    std::vector<std::pair<std::string, double>> trait_bars;
    for (std::size_t i = 0; i < cols.names.size(); ++i) {
      auto it = report.aggregate.per_trait.find(cols.names[i]);
      if (it != report.aggregate.per_trait.end())
        trait_bars.emplace_back(cols.labels[i], it->second);
    }
    auto trait_file = out_dir / "qwk_per_trait.svg";
    write_bar_chart_svg(trait_file, "QWK per trait", trait_bars);
    files.push_back(trait_file);

    if (!report.aggregate.per_prompt.empty()) {
      std::vector<std::pair<std::string, double>> prompt_bars;
      for (const auto& [prompt_id, v] : report.aggregate.per_prompt)
        prompt_bars.emplace_back(std::to_string(prompt_id), v);
      auto prompt_file = out_dir / "qwk_per_prompt.svg";
      write_bar_chart_svg(prompt_file, "QWK per prompt", prompt_bars);
      files.push_back(prompt_file);
    }
  }
  return files;
}

}  // namespace rmts
