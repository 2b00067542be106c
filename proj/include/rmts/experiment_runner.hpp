#ifndef RMTS_EXPERIMENT_RUNNER_HPP_
#define RMTS_EXPERIMENT_RUNNER_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmts/corpus.hpp"
#include "rmts/metrics.hpp"
#include "rmts/rationale_engine.hpp"
#include "rmts/scoring_backend.hpp"
#include "rmts/sequence_codec.hpp"

namespace rmts {

// Declarative description of one study run.
struct ExperimentPlan {
  std::string dataset;  // "asap" | "feedback"
  InputMode mode = InputMode::essay_only;
  std::string generator_id;  // required for rationale modes
  bool compressed = false;
  std::string ablated_trait;  // empty = no ablation
  bool overall_only = false;
  std::vector<int> folds;  // empty = every fold on disk
  BackendConfig backend;
  int token_limit = 512;
  std::uint64_t seed = 0;

  // artifacts
  std::string trait_config;
  std::string corpus_cache;
  std::string folds_dir;
  std::string rationale_cache;  // required for rationale modes
  std::string out_dir = "runs";

  void validate() const;
  std::string digest() const;  // content address of the run
  nlohmann::json to_json() const;
  static ExperimentPlan from_json(const nlohmann::json& obj);
  static ExperimentPlan load(const std::filesystem::path& file);
};

// Per-essay raw prediction with parse bookkeeping.
struct EssayPrediction {
  int fold = 0;
  std::string essay_id;
  int prompt_id = 0;
  std::string raw;
  std::vector<std::string> unparsed_traits;
  int pairs = 0;
  int fallback_pairs = 0;
};

struct RunReport {
  ExperimentPlan plan;
  std::string source = "computed";  // "external" for published fixture cells
  CellMap cells;
  AggregateReport aggregate;
  double parse_failure_rate = 0.0;  // fallback pairs / evaluable pairs, test essays
  std::vector<EssayPrediction> predictions;

  // Filled by compare(); deltas are QWK points x 100 (the "(+%)" convention).
  bool has_deltas = false;
  std::string baseline_digest;
  std::map<std::string, double> delta_per_trait;
  std::map<int, double> delta_per_prompt;
  double delta_avg = 0.0;
  // other/baseline per trait (the rationale-only faithfulness ratio).
  std::map<std::string, double> ratio_per_trait;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& obj);
  void save(const std::filesystem::path& file) const;
  static RunReport load(const std::filesystem::path& file);
};

// Assembled inputs plus encoded targets for every essay (fold-independent).
struct PreparedCorpus {
  DatasetSpec spec;
  std::vector<EssayRecord> records;               // cache order
  std::map<std::string, AssembledInput> inputs;   // by essay_id
  std::map<std::string, std::string> targets;     // encoded gold, by essay_id
};

// Loads the corpus and rationale cache for a plan and assembles every
// input. Rationale modes require a warm cache; missing (essay, trait)
// pairs raise MissingRationalesError with the full list.
PreparedCorpus prepare_corpus(const ExperimentPlan& plan);

// Executes the plan: per fold, train -> checkpoint selection -> test
// prediction -> parse -> NaN filtering -> QWK cells; then aggregates and
// persists the report under out_dir/<digest>/. Re-running a completed
// plan returns the stored report.
RunReport run(const ExperimentPlan& plan);

// Cellwise and aggregate deltas of `other` against `baseline`; both must
// share dataset and folds. Returns `other` with delta fields set.
RunReport compare(const RunReport& baseline, const RunReport& other);

// Builds an externally-sourced report (published numbers) from a fixture
// file carrying per-trait and optionally per-prompt aggregate cells.
RunReport load_external_report(const std::filesystem::path& fixture);

enum class ReportFormat { table, plot_bundle };

// table: report_table.txt mirroring the paper's layout (traits as
// columns, prediction-order arrow, AVG (SD), optional delta row).
// plot_bundle: per-trait and per-prompt bar charts as SVG files.
std::vector<std::filesystem::path> emit_report(const RunReport& report,
                                               ReportFormat format,
                                               const std::filesystem::path& out_dir);

}  // namespace rmts

#endif  // RMTS_EXPERIMENT_RUNNER_HPP_
