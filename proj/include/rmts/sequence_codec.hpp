#ifndef RMTS_SEQUENCE_CODEC_HPP_
#define RMTS_SEQUENCE_CODEC_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rmts/corpus.hpp"
#include "rmts/rationale.hpp"

namespace rmts {

enum class InputMode { essay_only, essay_plus_rationale, rationale_only };

std::string to_string(InputMode mode);
InputMode input_mode_from_string(const std::string& s);

// Structural markers plus one indivisible token per trait name. Backends
// register these with their tokenizers so trait names never split.
struct SpecialTokenSet {
  std::vector<std::string> markers;

  static SpecialTokenSet for_dataset(const DatasetSpec& spec);
  // Stable digest of the token inventory; TrainedScorer manifests must match.
  std::string version() const;
  void write_manifest(const std::filesystem::path& file) const;
  static SpecialTokenSet read_manifest(const std::filesystem::path& file);
};

struct AssembledInput {
  std::string essay_id;  // carried for reports and reference backends
  int prompt_id = 0;
  std::string text;
  InputMode mode = InputMode::essay_only;
  std::vector<std::string> special_tokens_used;
  bool truncated = false;
};

// Builds "Score the essay of the prompt N <Essay> ... <Rationale> ..."
// under a whitespace-token budget. Truncation trims the rationale tail
// first, then the essay tail; the prefix and markers are never cut.
AssembledInput assemble_input(const EssayRecord& record, const Rationale* rationale,
                              InputMode mode, const PromptSpec& spec,
                              int token_limit);

// Canonical target string: "<TraitToken> score" pairs in decode order,
// absent gold traits omitted.
std::string encode_targets(const std::map<std::string, double>& gold,
                           const PromptSpec& spec);

struct ScoreSequence {
  std::string raw;
  std::map<std::string, double> parsed;
  std::vector<std::string> unparsed_traits;   // expected but never found
  std::vector<std::string> clamped_traits;    // off-grid, snapped into range
  std::vector<std::string> duplicate_traits;  // valid repeat ignored (first wins)
};

// Total function over arbitrary model output: greedy left-to-right scan
// for trait tokens followed by a numeric literal. Never throws.
ScoreSequence parse_scores(const std::string& raw, const PromptSpec& spec);

struct EvalPair {
  std::string trait;
  double gold = 0.0;
  double pred = 0.0;
  bool fallback = false;  // trait unparsed; pred is the grid midpoint
};

// Pairs only for traits with present gold. Unparsed traits contribute a
// flagged midpoint-fallback pair so every essay stays evaluable.
std::vector<EvalPair> evaluable_pairs(const ScoreSequence& parsed,
                                      const std::map<std::string, double>& gold,
                                      const PromptSpec& spec);

}  // namespace rmts

#endif  // RMTS_SEQUENCE_CODEC_HPP_
