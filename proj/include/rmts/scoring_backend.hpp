#ifndef RMTS_SCORING_BACKEND_HPP_
#define RMTS_SCORING_BACKEND_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rmts/corpus.hpp"
#include "rmts/sequence_codec.hpp"

namespace rmts {

// Defaults mirror the training settings used for the fine-tuned scorers.
struct BackendConfig {
  std::string backend_id = "oracle";  // oracle | memorizer | bow_regressor | seq2seq:<model>
  int epochs = 15;
  int batch_size = 4;
  int eval_every_steps = 5000;
  int early_stop_patience = 2;
  int max_input_tokens = 512;
  std::uint64_t seed = 0;
  // External trainer command for seq2seq backends; falls back to the
  // RMTS_SEQ2SEQ_TRAINER environment variable.
  std::string trainer_cmd;
  std::string work_dir = "seq2seq_work";
};

// Identifies the experimental cell a scorer was trained for.
struct RunMetadata {
  std::string dataset;
  int fold = 0;
  std::string mode = "essay_only";
  std::string ablated_trait;
  bool compressed = false;
  bool overall_only = false;
};

struct TrainedScorer {
  std::string backend_id;
  std::string checkpoint_ref;  // opaque handle owned by the backend
  std::string vocab_version;   // codec token-manifest digest at train time
  std::vector<std::string> vocab_manifest;
  RunMetadata metadata;
};

struct EvaluatedCheckpoint {
  TrainedScorer scorer;
  double dev_qwk = 0.0;
  long step = 0;
};

// Text-in/text-out train+predict contract. Backends never emit structured
// score maps; every prediction is a raw string for parse_scores.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;
  virtual std::string backend_id() const = 0;

  // Targets must be aligned with inputs and produced by encode_targets.
  // Returns at least one dev-evaluated checkpoint.
  virtual std::vector<EvaluatedCheckpoint> train(
      const std::vector<AssembledInput>& train_inputs,
      const std::vector<std::string>& train_targets,
      const std::vector<AssembledInput>& dev_inputs,
      const std::vector<std::string>& dev_targets, const RunMetadata& metadata) = 0;

  // One raw string per input, in order; greedy/deterministic decoding.
  virtual std::vector<std::string> predict(
      const TrainedScorer& scorer, const std::vector<AssembledInput>& inputs) = 0;

  // Checkpoint directory layout: config.json, vocab_manifest.json,
  // metadata.json, payload.json (backend-specific).
  virtual void save_checkpoint(const TrainedScorer& scorer,
                               const std::filesystem::path& dir) const = 0;
  virtual TrainedScorer load_checkpoint(const std::filesystem::path& dir) = 0;
};

// oracle_targets maps essay_id -> encoded gold target string and is
// consulted only by the oracle backend (it must cover every essay the
// oracle will ever be asked about).
std::unique_ptr<ScoringBackend> make_backend(
    const BackendConfig& config, const DatasetSpec& spec,
    std::map<std::string, std::string> oracle_targets = {});

// Mean per-(prompt, trait) QWK of raw predictions against encoded gold
// targets, the dev-selection signal shared by all backends.
double mean_qwk(const std::vector<AssembledInput>& inputs,
                const std::vector<std::string>& gold_targets,
                const std::vector<std::string>& raw_predictions,
                const DatasetSpec& spec);

}  // namespace rmts

#endif  // RMTS_SCORING_BACKEND_HPP_
