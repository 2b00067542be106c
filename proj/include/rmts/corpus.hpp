#ifndef RMTS_CORPUS_HPP_
#define RMTS_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rmts {

// One scored dimension of writing quality for a prompt.
struct TraitSpec {
  std::string name;     // canonical, e.g. "Word Choice"
  std::string abbrev;   // table label, e.g. "WC"
  double score_min = 0.0;
  double score_max = 0.0;
  double score_step = 1.0;
  std::string rubric_text;
  std::string column;        // column name in the raw corpus table
  bool holistic = false;     // scored but excluded from rationale generation

  int grid_points() const;                 // K
  bool on_grid(double v) const;            // in range and on the step grid
  double snap_to_grid(double v) const;     // nearest grid point inside range
  double grid_midpoint() const;            // middle grid point (lower for even K)
  std::string special_token() const;       // "<Word_Choice>"
  std::string tag() const;                 // "[word choice]"
};

// Per-prompt trait inventory, writing prompt, and trait decoding order.
struct PromptSpec {
  int prompt_id = 0;
  std::string essay_instructions;
  std::string source_excerpt;  // appended to instructions unless excerpt_free
  std::vector<TraitSpec> traits;
  std::vector<std::string> decode_order;  // sub-traits first, holistic last

  const TraitSpec* find_trait(const std::string& name) const;
  const TraitSpec& trait(const std::string& name) const;  // throws ConfigError
  bool has_trait(const std::string& name) const;
  // decode_order restricted to non-holistic traits.
  std::vector<std::string> rationale_traits() const;
  void validate() const;
};

// Trait/prompt configuration for one dataset family.
struct DatasetSpec {
  std::string dataset;  // "asap" | "feedback"
  int sentinel_prompt_id = 0;  // prompt id assigned to single-prompt corpora
  std::string id_column;
  std::string prompt_column;  // empty for single-prompt corpora
  std::string text_column;
  std::vector<std::string> global_decode_order;  // union, prediction order
  std::map<int, PromptSpec> prompts;

  const PromptSpec& prompt(int prompt_id) const;  // throws ConfigError
  // Union of trait names over all prompts, in global prediction order.
  std::vector<std::string> all_trait_names() const;
  // Paper-table column order: reverse of the prediction order.
  std::vector<std::string> display_trait_order() const;

  static DatasetSpec load(const std::filesystem::path& trait_config);
};

// One essay with its gold trait scores. Absent traits are simply missing
// from gold_scores (NaN semantics in the source data).
struct EssayRecord {
  std::string essay_id;
  int prompt_id = 0;
  std::string text;
  std::map<std::string, double> gold_scores;

  bool operator==(const EssayRecord&) const = default;
};

struct FoldSplit {
  int fold_index = 0;
  std::set<std::string> train_ids;
  std::set<std::string> dev_ids;
  std::set<std::string> test_ids;
};

// A gold-score conflict found while merging a trait table onto loaded
// records: the kept value came from the primary source.
struct MergeConflict {
  std::string essay_id;
  std::string trait;
  double kept = 0.0;
  double discarded = 0.0;
};

// corpus operations ---------------------------------------------------------

// Loads the merged ASAP/ASAP++ TSV export. Columns are resolved through
// the DatasetSpec; blank/absent score cells become absent gold entries.
std::vector<EssayRecord> load_asap(const std::filesystem::path& essay_file,
                                   const DatasetSpec& spec);
std::vector<EssayRecord> load_asap(const std::filesystem::path& essay_file,
                                   const std::filesystem::path& trait_config);

// Loads the Feedback Prize CSV (quoted fields, embedded newlines). All six
// trait scores must be present and on the half-point grid.
std::vector<EssayRecord> load_feedback(const std::filesystem::path& csv_file,
                                       const DatasetSpec& spec);
std::vector<EssayRecord> load_feedback(const std::filesystem::path& csv_file,
                                       const std::filesystem::path& trait_config);

// Adds trait scores from a secondary table (CSV or TSV by extension) onto
// already-loaded records, joining on essay id. Scores already present on a
// record win; losing values are reported as conflicts.
std::vector<MergeConflict> merge_trait_table(std::vector<EssayRecord>& records,
                                             const std::filesystem::path& table,
                                             const DatasetSpec& spec);

// 5-fold 60/20/20 splits. Unstratified mode deals each prompt's essays
// independently; stratified mode orders essays by a seed-keyed hash of
// their label vector and deals round-robin, balancing label marginals.
std::vector<FoldSplit> make_folds(const std::vector<EssayRecord>& records,
                                  int n_folds, std::uint64_t seed,
                                  bool stratified);

// Canonical corpus cache: one JSON object per line.
void save_cache(const std::vector<EssayRecord>& records,
                const std::filesystem::path& file);
std::vector<EssayRecord> load_cache(const std::filesystem::path& file);

// One structured file per fold under dir: fold_<k>.json.
void save_folds(const std::vector<FoldSplit>& folds,
                const std::filesystem::path& dir);
std::vector<FoldSplit> load_folds(const std::filesystem::path& dir);

}  // namespace rmts

#endif  // RMTS_CORPUS_HPP_
