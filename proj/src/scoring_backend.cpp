#include "rmts/scoring_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "rmts/errors.hpp"
#include "rmts/jsonl.hpp"
#include "rmts/metrics.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace rmts {

double mean_qwk(const std::vector<AssembledInput>& inputs,
                const std::vector<std::string>& gold_targets,
                const std::vector<std::string>& raw_predictions,
                const DatasetSpec& spec) {
  if (inputs.size() != gold_targets.size() || inputs.size() != raw_predictions.size())
    throw ValidationError("mean_qwk: misaligned inputs/targets/predictions");

  // (prompt, trait) -> gold & pred lists
  std::map<std::pair<int, std::string>, std::pair<std::vector<double>, std::vector<double>>>
      cells;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const PromptSpec& prompt = spec.prompt(inputs[i].prompt_id);
    ScoreSequence gold_seq = parse_scores(gold_targets[i], prompt);
    ScoreSequence pred_seq = parse_scores(raw_predictions[i], prompt);
    for (const auto& pair : evaluable_pairs(pred_seq, gold_seq.parsed, prompt)) {
      auto& cell = cells[{inputs[i].prompt_id, pair.trait}];
      cell.first.push_back(pair.gold);
      cell.second.push_back(pair.pred);
    }
  }
  if (cells.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [key, lists] : cells) {
    const TraitSpec& trait = spec.prompt(key.first).trait(key.second);
    sum += qwk(lists.first, lists.second, trait.score_min, trait.score_max,
               trait.score_step)
               .kappa;
  }
  return sum / static_cast<double>(cells.size());
}

namespace {

void check_aligned(const std::vector<AssembledInput>& inputs,
                   const std::vector<std::string>& targets, const char* which) {
  if (inputs.size() != targets.size())
    throw ValidationError(std::string("train: ") + which +
                          " inputs and targets are misaligned");
}

void write_json_file(const std::filesystem::path& file, const json& obj) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + file.string());
  out << obj.dump(2) << "\n";
}

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw ParseError("invalid JSON in " + file.string());
  return obj;
}

json config_snapshot(const BackendConfig& config) {
  return {{"backend_id", config.backend_id},
          {"epochs", config.epochs},
          {"batch_size", config.batch_size},
          {"eval_every_steps", config.eval_every_steps},
          {"early_stop_patience", config.early_stop_patience},
          {"max_input_tokens", config.max_input_tokens},
          {"seed", config.seed}};
}

json metadata_to_json(const RunMetadata& m) {
  return {{"dataset", m.dataset},       {"fold", m.fold},
          {"mode", m.mode},             {"ablated_trait", m.ablated_trait},
          {"compressed", m.compressed}, {"overall_only", m.overall_only}};
}

RunMetadata metadata_from_json(const json& obj) {
  RunMetadata m;
  m.dataset = obj.value("dataset", "");
  m.fold = obj.value("fold", 0);
  m.mode = obj.value("mode", "essay_only");
  m.ablated_trait = obj.value("ablated_trait", "");
  m.compressed = obj.value("compressed", false);
  m.overall_only = obj.value("overall_only", false);
  return m;
}

// Shared bookkeeping for the in-process reference backends.
class ReferenceBackend : public ScoringBackend {
 public:
  ReferenceBackend(BackendConfig config, const DatasetSpec& spec)
      : config_(std::move(config)), spec_(spec), tokens_(SpecialTokenSet::for_dataset(spec)) {}

 protected:
  TrainedScorer make_scorer(const RunMetadata& metadata) {
    TrainedScorer scorer;
    scorer.backend_id = config_.backend_id;
    scorer.checkpoint_ref =
        config_.backend_id + ":" + std::to_string(next_checkpoint_++);
    scorer.vocab_version = tokens_.version();
    scorer.vocab_manifest = tokens_.markers;
    scorer.metadata = metadata;
    return scorer;
  }

  void check_manifest(const TrainedScorer& scorer) const {
    if (scorer.vocab_version != tokens_.version())
      throw ValidationError("vocab manifest mismatch: scorer was trained with token set " +
                            scorer.vocab_version + ", codec is " + tokens_.version());
  }

  BackendConfig config_;
  const DatasetSpec& spec_;
  SpecialTokenSet tokens_;
  long next_checkpoint_ = 0;
};

// Emits the gold target for any essay it knows; a test instrument that
// makes the full pipeline's ceiling exactly 1.0.
class OracleBackend : public ReferenceBackend {
 public:
  OracleBackend(BackendConfig config, const DatasetSpec& spec,
                std::map<std::string, std::string> targets)
      : ReferenceBackend(std::move(config), spec), targets_(std::move(targets)) {
    if (targets_.empty())
      throw ConfigError("oracle backend requires a gold-target map");
  }

  std::string backend_id() const override { return "oracle"; }

  std::vector<EvaluatedCheckpoint> train(const std::vector<AssembledInput>& train_inputs,
                                         const std::vector<std::string>& train_targets,
                                         const std::vector<AssembledInput>& dev_inputs,
                                         const std::vector<std::string>& dev_targets,
                                         const RunMetadata& metadata) override {
    check_aligned(train_inputs, train_targets, "train");
    check_aligned(dev_inputs, dev_targets, "dev");
    EvaluatedCheckpoint ckpt;
    ckpt.scorer = make_scorer(metadata);
    ckpt.step = 0;
    ckpt.dev_qwk = mean_qwk(dev_inputs, dev_targets, predict(ckpt.scorer, dev_inputs), spec_);
    return {ckpt};
  }

  std::vector<std::string> predict(const TrainedScorer& scorer,
                                   const std::vector<AssembledInput>& inputs) override {
    check_manifest(scorer);
    std::vector<std::string> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) {
      auto it = targets_.find(input.essay_id);
      out.push_back(it == targets_.end() ? std::string() : it->second);
    }
    return out;
  }

  void save_checkpoint(const TrainedScorer& scorer,
                       const std::filesystem::path& dir) const override {
    std::filesystem::create_directories(dir);
    write_json_file(dir / "config.json", config_snapshot(config_));
    write_json_file(dir / "vocab_manifest.json",
                    {{"version", scorer.vocab_version}, {"markers", scorer.vocab_manifest}});
    write_json_file(dir / "metadata.json", metadata_to_json(scorer.metadata));
    write_json_file(dir / "payload.json", {{"targets", targets_}});
  }

  TrainedScorer load_checkpoint(const std::filesystem::path& dir) override {
    json payload = read_json_file(dir / "payload.json");
    targets_ = payload.at("targets").get<std::map<std::string, std::string>>();
    json manifest = read_json_file(dir / "vocab_manifest.json");
    TrainedScorer scorer = make_scorer(metadata_from_json(read_json_file(dir / "metadata.json")));
    scorer.vocab_version = manifest.at("version").get<std::string>();
    scorer.vocab_manifest = manifest.at("markers").get<std::vector<std::string>>();
    return scorer;
  }

 private:
  std::map<std::string, std::string> targets_;
};

// Exact input-text lookup; unseen inputs decode to the empty string and
// exercise the downstream fallback path.
class MemorizerBackend : public ReferenceBackend {
 public:
  using ReferenceBackend::ReferenceBackend;

  std::string backend_id() const override { return "memorizer"; }

  std::vector<EvaluatedCheckpoint> train(const std::vector<AssembledInput>& train_inputs,
                                         const std::vector<std::string>& train_targets,
                                         const std::vector<AssembledInput>& dev_inputs,
                                         const std::vector<std::string>& dev_targets,
                                         const RunMetadata& metadata) override {
    check_aligned(train_inputs, train_targets, "train");
    check_aligned(dev_inputs, dev_targets, "dev");
    std::map<std::string, std::string> memory;
    for (std::size_t i = 0; i < train_inputs.size(); ++i)
      memory[train_inputs[i].text] = train_targets[i];

    EvaluatedCheckpoint ckpt;
    ckpt.scorer = make_scorer(metadata);
    ckpt.step = 0;
    memories_[ckpt.scorer.checkpoint_ref] = std::move(memory);
    ckpt.dev_qwk = mean_qwk(dev_inputs, dev_targets, predict(ckpt.scorer, dev_inputs), spec_);
    return {ckpt};
  }

  std::vector<std::string> predict(const TrainedScorer& scorer,
                                   const std::vector<AssembledInput>& inputs) override {
    check_manifest(scorer);
    auto mem = memories_.find(scorer.checkpoint_ref);
    if (mem == memories_.end())
      throw ValidationError("unknown checkpoint " + scorer.checkpoint_ref);
    std::vector<std::string> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) {
      auto it = mem->second.find(input.text);
      out.push_back(it == mem->second.end() ? std::string() : it->second);
    }
    return out;
  }

  void save_checkpoint(const TrainedScorer& scorer,
                       const std::filesystem::path& dir) const override {
    auto mem = memories_.find(scorer.checkpoint_ref);
    if (mem == memories_.end())
      throw ValidationError("unknown checkpoint " + scorer.checkpoint_ref);
    std::filesystem::create_directories(dir);
    write_json_file(dir / "config.json", config_snapshot(config_));
    write_json_file(dir / "vocab_manifest.json",
                    {{"version", scorer.vocab_version}, {"markers", scorer.vocab_manifest}});
    write_json_file(dir / "metadata.json", metadata_to_json(scorer.metadata));
    write_json_file(dir / "payload.json", {{"memory", mem->second}});
  }

  TrainedScorer load_checkpoint(const std::filesystem::path& dir) override {
    json payload = read_json_file(dir / "payload.json");
    json manifest = read_json_file(dir / "vocab_manifest.json");
    TrainedScorer scorer = make_scorer(metadata_from_json(read_json_file(dir / "metadata.json")));
    scorer.vocab_version = manifest.at("version").get<std::string>();
    scorer.vocab_manifest = manifest.at("markers").get<std::vector<std::string>>();
    memories_[scorer.checkpoint_ref] =
        payload.at("memory").get<std::map<std::string, std::string>>();
    return scorer;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> memories_;
};

// Nearest-centroid bag-of-words scorer: one centroid per (prompt, trait,
// grid label) over training token counts; prediction emits the label of
// the closest centroid for each trait in decode order.
class BowRegressorBackend : public ReferenceBackend {
 public:
  using ReferenceBackend::ReferenceBackend;

  using Counts = std::map<std::string, double>;

  std::string backend_id() const override { return "bow_regressor"; }

  std::vector<EvaluatedCheckpoint> train(const std::vector<AssembledInput>& train_inputs,
                                         const std::vector<std::string>& train_targets,
                                         const std::vector<AssembledInput>& dev_inputs,
                                         const std::vector<std::string>& dev_targets,
                                         const RunMetadata& metadata) override {
    check_aligned(train_inputs, train_targets, "train");
    check_aligned(dev_inputs, dev_targets, "dev");

    // (prompt, trait, label-string) -> summed counts + n
    std::map<std::string, std::pair<Counts, double>> sums;
    for (std::size_t i = 0; i < train_inputs.size(); ++i) {
      const PromptSpec& prompt = spec_.prompt(train_inputs[i].prompt_id);
      ScoreSequence gold = parse_scores(train_targets[i], prompt);
      Counts features = bag_of_words(train_inputs[i].text);
      for (const auto& [trait, score] : gold.parsed) {
        auto& slot = sums[centroid_key(train_inputs[i].prompt_id, trait, score)];
        for (const auto& [word, count] : features) slot.first[word] += count;
        slot.second += 1.0;
      }
    }
    std::map<std::string, Counts> centroids;
    for (auto& [key, slot] : sums) {
      Counts centroid = std::move(slot.first);
      for (auto& [word, total] : centroid) total /= slot.second;
      centroids[key] = std::move(centroid);
    }

    EvaluatedCheckpoint ckpt;
    ckpt.scorer = make_scorer(metadata);
    ckpt.step = 0;
    models_[ckpt.scorer.checkpoint_ref] = std::move(centroids);
    ckpt.dev_qwk = mean_qwk(dev_inputs, dev_targets, predict(ckpt.scorer, dev_inputs), spec_);
    return {ckpt};
  }

  std::vector<std::string> predict(const TrainedScorer& scorer,
                                   const std::vector<AssembledInput>& inputs) override {
    check_manifest(scorer);
    auto model = models_.find(scorer.checkpoint_ref);
    if (model == models_.end())
      throw ValidationError("unknown checkpoint " + scorer.checkpoint_ref);
    const auto& centroids = model->second;

    std::vector<std::string> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) {
      const PromptSpec& prompt = spec_.prompt(input.prompt_id);
      Counts features = bag_of_words(input.text);
      std::string raw;
      for (const auto& name : prompt.decode_order) {
        const TraitSpec& trait = prompt.trait(name);
        double best_score = 0.0, best_dist = 0.0;
        bool found = false;
        for (int g = 0; g < trait.grid_points(); ++g) {
          double label = trait.score_min + g * trait.score_step;
          auto it = centroids.find(centroid_key(input.prompt_id, name, label));
          if (it == centroids.end()) continue;
          double dist = squared_distance(features, it->second);
          if (!found || dist < best_dist) {
            found = true;
            best_dist = dist;
            best_score = label;
          }
        }
        if (!found) continue;  // trait never seen in training
        if (!raw.empty()) raw += " ";
        raw += trait.special_token() + " " + text::format_score(best_score);
      }
      out.push_back(std::move(raw));
    }
    return out;
  }

  void save_checkpoint(const TrainedScorer& scorer,
                       const std::filesystem::path& dir) const override {
    auto model = models_.find(scorer.checkpoint_ref);
    if (model == models_.end())
      throw ValidationError("unknown checkpoint " + scorer.checkpoint_ref);
    std::filesystem::create_directories(dir);
    write_json_file(dir / "config.json", config_snapshot(config_));
    write_json_file(dir / "vocab_manifest.json",
                    {{"version", scorer.vocab_version}, {"markers", scorer.vocab_manifest}});
    write_json_file(dir / "metadata.json", metadata_to_json(scorer.metadata));
    write_json_file(dir / "payload.json", {{"centroids", model->second}});
  }

  TrainedScorer load_checkpoint(const std::filesystem::path& dir) override {
    json payload = read_json_file(dir / "payload.json");
    json manifest = read_json_file(dir / "vocab_manifest.json");
    TrainedScorer scorer = make_scorer(metadata_from_json(read_json_file(dir / "metadata.json")));
    scorer.vocab_version = manifest.at("version").get<std::string>();
    scorer.vocab_manifest = manifest.at("markers").get<std::vector<std::string>>();
    models_[scorer.checkpoint_ref] =
        payload.at("centroids").get<std::map<std::string, Counts>>();
    return scorer;
  }

 private:
  static std::string centroid_key(int prompt_id, const std::string& trait, double label) {
    return std::to_string(prompt_id) + "|" + trait + "|" + text::format_score(label);
  }

  static Counts bag_of_words(const std::string& s) {
    Counts counts;
    for (const auto& token : text::whitespace_tokens(text::lowercase(s)))
      counts[token] += 1.0;
    return counts;
  }

  static double squared_distance(const Counts& a, const Counts& b) {
    double dist = 0.0;
    for (const auto& [word, av] : a) {
      auto it = b.find(word);
      double d = av - (it == b.end() ? 0.0 : it->second);
      dist += d * d;
    }
    for (const auto& [word, bv] : b)
      if (!a.count(word)) dist += bv * bv;
    return dist;
  }

  std::map<std::string, std::map<std::string, Counts>> models_;
};

// Adapter for real encoder-decoder scorers driven by an external trainer
// command. The file protocol under work_dir:
//   train:   config.json, vocab_manifest.json, train.jsonl, dev.jsonl
//            -> `cmd train <work_dir>` writes checkpoints.json
//   predict: inputs.jsonl -> `cmd predict <work_dir> <ref>` writes
//            predictions.jsonl ({"raw": ...} per line, in order)
class Seq2SeqBackend : public ReferenceBackend {
 public:
  Seq2SeqBackend(BackendConfig config, const DatasetSpec& spec, std::string model_name)
      : ReferenceBackend(std::move(config), spec), model_name_(std::move(model_name)) {
    trainer_cmd_ = config_.trainer_cmd;
    if (trainer_cmd_.empty()) {
      const char* env = std::getenv("RMTS_SEQ2SEQ_TRAINER");
      if (env) trainer_cmd_ = env;
    }
    if (trainer_cmd_.empty())
      throw CapabilityError(
          "seq2seq backend '" + model_name_ +
          "' needs an external trainer: set backend.trainer_cmd or RMTS_SEQ2SEQ_TRAINER");
  }

  std::string backend_id() const override { return "seq2seq:" + model_name_; }

  std::vector<EvaluatedCheckpoint> train(const std::vector<AssembledInput>& train_inputs,
                                         const std::vector<std::string>& train_targets,
                                         const std::vector<AssembledInput>& dev_inputs,
                                         const std::vector<std::string>& dev_targets,
                                         const RunMetadata& metadata) override {
    check_aligned(train_inputs, train_targets, "train");
    check_aligned(dev_inputs, dev_targets, "dev");

    std::filesystem::create_directories(config_.work_dir);
    json config = config_snapshot(config_);
    config["model"] = model_name_;
    write_json_file(std::filesystem::path(config_.work_dir) / "config.json", config);
    tokens_.write_manifest(std::filesystem::path(config_.work_dir) / "vocab_manifest.json");
    write_pairs(std::filesystem::path(config_.work_dir) / "train.jsonl", train_inputs,
                train_targets);
    write_pairs(std::filesystem::path(config_.work_dir) / "dev.jsonl", dev_inputs,
                dev_targets);

    run_command(trainer_cmd_ + " train " + quote(config_.work_dir));

    json listing =
        read_json_file(std::filesystem::path(config_.work_dir) / "checkpoints.json");
    std::vector<EvaluatedCheckpoint> checkpoints;
    for (const json& entry : listing) {
      EvaluatedCheckpoint ckpt;
      ckpt.scorer = make_scorer(metadata);
      ckpt.scorer.checkpoint_ref = entry.at("ref").get<std::string>();
      ckpt.step = entry.value("step", 0L);
      ckpt.dev_qwk = mean_qwk(dev_inputs, dev_targets, predict(ckpt.scorer, dev_inputs), spec_);
      checkpoints.push_back(std::move(ckpt));
    }
    if (checkpoints.empty())
      throw Error("external trainer produced no checkpoints");
    return checkpoints;
  }

  std::vector<std::string> predict(const TrainedScorer& scorer,
                                   const std::vector<AssembledInput>& inputs) override {
    check_manifest(scorer);
    auto in_file = std::filesystem::path(config_.work_dir) / "inputs.jsonl";
    {
      std::ofstream out(in_file, std::ios::trunc);
      for (const auto& input : inputs)
        out << json{{"essay_id", input.essay_id}, {"text", input.text}}.dump() << "\n";
    }
    run_command(trainer_cmd_ + " predict " + quote(config_.work_dir) + " " +
                quote(scorer.checkpoint_ref));
    std::vector<std::string> out;
    jsonl::for_each(std::filesystem::path(config_.work_dir) / "predictions.jsonl",
                    [&](std::size_t, const json& obj) {
                      out.push_back(obj.at("raw").get<std::string>());
                    });
    if (out.size() != inputs.size())
      throw Error("external trainer returned " + std::to_string(out.size()) +
                  " predictions for " + std::to_string(inputs.size()) + " inputs");
    return out;
  }

  void save_checkpoint(const TrainedScorer& scorer,
                       const std::filesystem::path& dir) const override {
    std::filesystem::create_directories(dir);
    json config = config_snapshot(config_);
    config["model"] = model_name_;
    write_json_file(dir / "config.json", config);
    write_json_file(dir / "vocab_manifest.json",
                    {{"version", scorer.vocab_version}, {"markers", scorer.vocab_manifest}});
    write_json_file(dir / "metadata.json", metadata_to_json(scorer.metadata));
    write_json_file(dir / "payload.json", {{"ref", scorer.checkpoint_ref}});
  }

  TrainedScorer load_checkpoint(const std::filesystem::path& dir) override {
    json payload = read_json_file(dir / "payload.json");
    json manifest = read_json_file(dir / "vocab_manifest.json");
    TrainedScorer scorer = make_scorer(metadata_from_json(read_json_file(dir / "metadata.json")));
    scorer.checkpoint_ref = payload.at("ref").get<std::string>();
    scorer.vocab_version = manifest.at("version").get<std::string>();
    scorer.vocab_manifest = manifest.at("markers").get<std::vector<std::string>>();
    return scorer;
  }

 private:
  static void write_pairs(const std::filesystem::path& file,
                          const std::vector<AssembledInput>& inputs,
                          const std::vector<std::string>& targets) {
    std::ofstream out(file, std::ios::trunc);
    for (std::size_t i = 0; i < inputs.size(); ++i)
      out << json{{"essay_id", inputs[i].essay_id},
                  {"text", inputs[i].text},
                  {"target", targets[i]}}
                 .dump()
          << "\n";
  }

  static std::string quote(const std::string& s) { return "'" + s + "'"; }

  static void run_command(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    if (rc != 0)
      throw Error("external trainer command failed (exit " + std::to_string(rc) +
                  "): " + cmd);
  }

  std::string model_name_;
  std::string trainer_cmd_;
};

}  // namespace

std::unique_ptr<ScoringBackend> make_backend(
    const BackendConfig& config, const DatasetSpec& spec,
    std::map<std::string, std::string> oracle_targets) {
  if (config.backend_id == "oracle")
    return std::make_unique<OracleBackend>(config, spec, std::move(oracle_targets));
  if (config.backend_id == "memorizer")
    return std::make_unique<MemorizerBackend>(config, spec);
  if (config.backend_id == "bow_regressor")
    return std::make_unique<BowRegressorBackend>(config, spec);
  if (text::starts_with(config.backend_id, "seq2seq:"))
    return std::make_unique<Seq2SeqBackend>(config, spec,
                                            config.backend_id.substr(8));
  throw ConfigError("unknown backend id '" + config.backend_id + "'");
}

}  // namespace rmts
