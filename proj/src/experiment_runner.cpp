#include "rmts/experiment_runner.hpp"

#include <algorithm>
#include <fstream>

#include "rmts/errors.hpp"
#include "rmts/jsonl.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace rmts {

// ExperimentPlan ------------------------------------------------------------

void ExperimentPlan::validate() const {
  if (dataset.empty()) throw ConfigError("plan: dataset is required");
  if (mode != InputMode::essay_only && generator_id.empty())
    throw ConfigError("plan: rationale modes require a generator_id");
  if (mode != InputMode::essay_only && rationale_cache.empty())
    throw ConfigError("plan: rationale modes require a rationale_cache path");
  if (!ablated_trait.empty() && mode != InputMode::essay_plus_rationale)
    throw ConfigError("plan: ablated_trait requires mode essay_plus_rationale");
  if (compressed && mode == InputMode::essay_only)
    throw ConfigError("plan: compressed rationales require a rationale mode");
  if (trait_config.empty()) throw ConfigError("plan: trait_config is required");
  if (corpus_cache.empty()) throw ConfigError("plan: corpus_cache is required");
  if (folds_dir.empty()) throw ConfigError("plan: folds_dir is required");
  for (int fold : folds)
    if (fold < 0 || fold > 4) throw ConfigError("plan: fold index out of range");
}

json ExperimentPlan::to_json() const {
  return {{"dataset", dataset},
          {"mode", rmts::to_string(mode)},
          {"generator_id", generator_id},
          {"compressed", compressed},
          {"ablated_trait", ablated_trait},
          {"overall_only", overall_only},
          {"folds", folds},
          {"backend",
           {{"backend_id", backend.backend_id},
            {"epochs", backend.epochs},
            {"batch_size", backend.batch_size},
            {"eval_every_steps", backend.eval_every_steps},
            {"early_stop_patience", backend.early_stop_patience},
            {"max_input_tokens", backend.max_input_tokens},
            {"seed", backend.seed},
            {"trainer_cmd", backend.trainer_cmd},
            {"work_dir", backend.work_dir}}},
          {"token_limit", token_limit},
          {"seed", seed},
          {"trait_config", trait_config},
          {"corpus_cache", corpus_cache},
          {"folds_dir", folds_dir},
          {"rationale_cache", rationale_cache},
          {"out_dir", out_dir}};
}

ExperimentPlan ExperimentPlan::from_json(const json& obj) {
  ExperimentPlan plan;
  plan.dataset = obj.at("dataset").get<std::string>();
  plan.mode = input_mode_from_string(obj.value("mode", "essay_only"));
  plan.generator_id = obj.value("generator_id", "");
  plan.compressed = obj.value("compressed", false);
  plan.ablated_trait = obj.value("ablated_trait", "");
  plan.overall_only = obj.value("overall_only", false);
  plan.folds = obj.value("folds", std::vector<int>{});
  if (obj.contains("backend")) {
    const json& b = obj.at("backend");
    plan.backend.backend_id = b.value("backend_id", "oracle");
    plan.backend.epochs = b.value("epochs", 15);
    plan.backend.batch_size = b.value("batch_size", 4);
    plan.backend.eval_every_steps = b.value("eval_every_steps", 5000);
    plan.backend.early_stop_patience = b.value("early_stop_patience", 2);
    plan.backend.max_input_tokens = b.value("max_input_tokens", 512);
    plan.backend.seed = b.value("seed", 0ULL);
    plan.backend.trainer_cmd = b.value("trainer_cmd", "");
    plan.backend.work_dir = b.value("work_dir", "seq2seq_work");
  }
  plan.token_limit = obj.value("token_limit", 512);
  plan.seed = obj.value("seed", 0ULL);
  plan.trait_config = obj.value("trait_config", "");
  plan.corpus_cache = obj.value("corpus_cache", "");
  plan.folds_dir = obj.value("folds_dir", "");
  plan.rationale_cache = obj.value("rationale_cache", "");
  plan.out_dir = obj.value("out_dir", "runs");
  return plan;
}

ExperimentPlan ExperimentPlan::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open plan file " + file.string());
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw ConfigError("invalid JSON in plan " + file.string());
  ExperimentPlan plan = from_json(obj);
  plan.validate();
  return plan;
}

std::string ExperimentPlan::digest() const {
  // out_dir does not change the experiment, only where artifacts land.
  json obj = to_json();
  obj.erase("out_dir");
  return text::hex64(text::fnv1a64(obj.dump()));
}

// RunReport -----------------------------------------------------------------

json RunReport::to_json() const {
  json cell_list = json::array();
  for (const auto& [key, result] : cells) {
    cell_list.push_back({{"prompt", std::get<0>(key)},
                         {"trait", std::get<1>(key)},
                         {"fold", std::get<2>(key)},
                         {"kappa", result.kappa},
                         {"n", result.n},
                         {"label_min", result.label_min},
                         {"label_max", result.label_max},
                         {"step", result.step},
                         {"degenerate", result.degenerate}});
  }
  json pred_list = json::array();
  for (const auto& p : predictions) {
    pred_list.push_back({{"fold", p.fold},
                         {"essay_id", p.essay_id},
                         {"prompt_id", p.prompt_id},
                         {"raw", p.raw},
                         {"unparsed_traits", p.unparsed_traits},
                         {"pairs", p.pairs},
                         {"fallback_pairs", p.fallback_pairs}});
  }
  json per_prompt = json::object();
  for (const auto& [prompt_id, v] : aggregate.per_prompt)
    per_prompt[std::to_string(prompt_id)] = v;
  json obj = {{"plan", plan.to_json()},
              {"source", source},
              {"cells", cell_list},
              {"aggregate",
               {{"per_trait", aggregate.per_trait},
                {"per_prompt", per_prompt},
                {"avg", aggregate.avg},
                {"fold_sd", aggregate.fold_sd}}},
              {"parse_failure_rate", parse_failure_rate},
              {"predictions", pred_list}};
  if (has_deltas) {
    json delta_prompt = json::object();
    for (const auto& [prompt_id, v] : delta_per_prompt)
      delta_prompt[std::to_string(prompt_id)] = v;
    obj["deltas"] = {{"baseline_digest", baseline_digest},
                     {"per_trait", delta_per_trait},
                     {"per_prompt", delta_prompt},
                     {"avg", delta_avg},
                     {"ratio_per_trait", ratio_per_trait}};
  }
  return obj;
}

RunReport RunReport::from_json(const json& obj) {
  RunReport report;
  report.plan = ExperimentPlan::from_json(obj.at("plan"));
  report.source = obj.value("source", "computed");
  for (const json& cell : obj.value("cells", json::array())) {
    QwkResult result;
    result.kappa = cell.at("kappa").get<double>();
    result.n = cell.value("n", 0);
    result.label_min = cell.value("label_min", 0.0);
    result.label_max = cell.value("label_max", 0.0);
    result.step = cell.value("step", 1.0);
    result.degenerate = cell.value("degenerate", false);
    report.cells[{cell.at("prompt").get<int>(), cell.at("trait").get<std::string>(),
                  cell.at("fold").get<int>()}] = result;
  }
  const json& agg = obj.at("aggregate");
  report.aggregate.per_trait =
      agg.value("per_trait", std::map<std::string, double>{});
  const json per_prompt = agg.value("per_prompt", json::object());
  for (auto it = per_prompt.begin(); it != per_prompt.end(); ++it)
    report.aggregate.per_prompt[std::stoi(it.key())] = it.value().get<double>();
  report.aggregate.avg = agg.value("avg", 0.0);
  report.aggregate.fold_sd = agg.value("fold_sd", 0.0);
  report.parse_failure_rate = obj.value("parse_failure_rate", 0.0);
  for (const json& p : obj.value("predictions", json::array())) {
    EssayPrediction pred;
    pred.fold = p.value("fold", 0);
    pred.essay_id = p.at("essay_id").get<std::string>();
    pred.prompt_id = p.value("prompt_id", 0);
    pred.raw = p.value("raw", "");
    pred.unparsed_traits = p.value("unparsed_traits", std::vector<std::string>{});
    pred.pairs = p.value("pairs", 0);
    pred.fallback_pairs = p.value("fallback_pairs", 0);
    report.predictions.push_back(std::move(pred));
  }
  if (obj.contains("deltas")) {
    const json& d = obj.at("deltas");
    report.has_deltas = true;
    report.baseline_digest = d.value("baseline_digest", "");
    report.delta_per_trait = d.value("per_trait", std::map<std::string, double>{});
    const json delta_prompt = d.value("per_prompt", json::object());
    for (auto it = delta_prompt.begin(); it != delta_prompt.end(); ++it)
      report.delta_per_prompt[std::stoi(it.key())] = it.value().get<double>();
    report.delta_avg = d.value("avg", 0.0);
    report.ratio_per_trait = d.value("ratio_per_trait", std::map<std::string, double>{});
  }
  return report;
}

void RunReport::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + file.string());
  out << to_json().dump(2) << "\n";
}

RunReport RunReport::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw ParseError("invalid JSON in " + file.string());
  return from_json(obj);
}

// prepare_corpus ------------------------------------------------------------

PreparedCorpus prepare_corpus(const ExperimentPlan& plan) {
  plan.validate();

  PreparedCorpus prepared;
  prepared.spec = DatasetSpec::load(plan.trait_config);
  prepared.records = load_cache(plan.corpus_cache);
  if (prepared.records.empty()) throw ValidationError("corpus cache is empty");

  if (!plan.ablated_trait.empty()) {
    bool known = false;
    for (const auto& [id, p] : prepared.spec.prompts)
      known |= p.has_trait(plan.ablated_trait);
    if (!known)
      throw ConfigError("ablated trait '" + plan.ablated_trait +
                        "' is not declared for any prompt");
  }

  // Rationales, when the mode needs them, must all be cached already.
  std::map<std::string, Rationale> rationales;
  if (plan.mode != InputMode::essay_only) {
    RationaleCache cache(plan.rationale_cache);
    std::vector<std::pair<std::string, std::string>> missing;
    for (const auto& record : prepared.records) {
      const PromptSpec& prompt = prepared.spec.prompt(record.prompt_id);
      Rationale rationale;
      rationale.essay_id = record.essay_id;
      rationale.prompt_id = record.prompt_id;
      rationale.compressed = plan.compressed;
      bool complete = true;
      for (const auto& name : prompt.rationale_traits()) {
        auto row = cache.find(record.essay_id, name, plan.generator_id, 0,
                              plan.compressed);
        if (!row) {
          missing.emplace_back(record.essay_id, name);
          complete = false;
          continue;
        }
        RationaleSegment seg;
        seg.trait_name = name;
        seg.text = row->text;
        seg.generator_id = plan.generator_id;
        rationale.segments.push_back(std::move(seg));
      }
      if (complete) rationales[record.essay_id] = std::move(rationale);
    }
    if (!missing.empty())
      throw MissingRationalesError(
          "rationale cache is missing " + std::to_string(missing.size()) +
              " (essay, trait) rows for generator " + plan.generator_id,
          missing);
  }

  for (const auto& record : prepared.records) {
    const PromptSpec& prompt = prepared.spec.prompt(record.prompt_id);

    const Rationale* rationale = nullptr;
    Rationale ablated;
    if (plan.mode != InputMode::essay_only) {
      const Rationale& full = rationales.at(record.essay_id);
      if (!plan.ablated_trait.empty()) {
        ablated = full.without_trait(plan.ablated_trait);
        rationale = &ablated;
      } else {
        rationale = &full;
      }
    }
    prepared.inputs[record.essay_id] =
        assemble_input(record, rationale, plan.mode, prompt, plan.token_limit);

    std::map<std::string, double> gold = record.gold_scores;
    if (plan.overall_only) {
      std::map<std::string, double> holistic_only;
      for (const auto& trait : prompt.traits)
        if (trait.holistic && gold.count(trait.name))
          holistic_only[trait.name] = gold.at(trait.name);
      gold = std::move(holistic_only);
    }
    prepared.targets[record.essay_id] = encode_targets(gold, prompt);
  }
  return prepared;
}

// run -------------------------------------------------------------------------

namespace {

struct FoldData {
  std::vector<AssembledInput> inputs;
  std::vector<std::string> targets;
  std::vector<const EssayRecord*> records;
};

FoldData collect(const PreparedCorpus& prepared, const std::set<std::string>& ids) {
  FoldData data;
  for (const auto& record : prepared.records) {
    if (!ids.count(record.essay_id)) continue;
    data.inputs.push_back(prepared.inputs.at(record.essay_id));
    data.targets.push_back(prepared.targets.at(record.essay_id));
    data.records.push_back(&record);
  }
  return data;
}

void write_inputs_file(const PreparedCorpus& prepared,
                       const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + file.string());
  std::vector<const AssembledInput*> sorted;
  for (const auto& [id, input] : prepared.inputs) sorted.push_back(&input);
  for (const AssembledInput* input : sorted) {
    out << json{{"essay_id", input->essay_id},
                {"prompt_id", input->prompt_id},
                {"mode", to_string(input->mode)},
                {"truncated", input->truncated},
                {"text", input->text}}
               .dump()
        << "\n";
  }
}

}  // namespace

RunReport run(const ExperimentPlan& plan) {
  plan.validate();

  const std::filesystem::path run_dir =
      std::filesystem::path(plan.out_dir) / plan.digest();
  const std::filesystem::path report_file = run_dir / "report.json";
  if (std::filesystem::exists(report_file)) return RunReport::load(report_file);

  PreparedCorpus prepared = prepare_corpus(plan);
  std::vector<FoldSplit> all_folds = load_folds(plan.folds_dir);
  std::vector<int> fold_ids = plan.folds;
  if (fold_ids.empty())
    for (const auto& fold : all_folds) fold_ids.push_back(fold.fold_index);

  // The oracle is a test instrument: it may be asked about any essay.
  std::map<std::string, std::string> oracle_targets;
  if (plan.backend.backend_id == "oracle") oracle_targets = prepared.targets;

  RunReport report;
  report.plan = plan;

  long total_pairs = 0, fallback_pairs = 0;
  for (int fold_id : fold_ids) {
    const FoldSplit* fold = nullptr;
    for (const auto& f : all_folds)
      if (f.fold_index == fold_id) fold = &f;
    if (!fold) throw ConfigError("fold " + std::to_string(fold_id) + " not found");

    FoldData train_data = collect(prepared, fold->train_ids);
    FoldData dev_data = collect(prepared, fold->dev_ids);
    FoldData test_data = collect(prepared, fold->test_ids);

    BackendConfig backend_config = plan.backend;
    backend_config.seed = plan.backend.seed ^ static_cast<std::uint64_t>(fold_id);
    auto backend = make_backend(backend_config, prepared.spec, oracle_targets);

    RunMetadata metadata;
    metadata.dataset = plan.dataset;
    metadata.fold = fold_id;
    metadata.mode = to_string(plan.mode);
    metadata.ablated_trait = plan.ablated_trait;
    metadata.compressed = plan.compressed;
    metadata.overall_only = plan.overall_only;

    std::vector<EvaluatedCheckpoint> checkpoints = backend->train(
        train_data.inputs, train_data.targets, dev_data.inputs, dev_data.targets,
        metadata);
    if (checkpoints.empty()) throw Error("backend returned no checkpoints");

    // Top two by dev QWK (ties to the earlier step), report the better test.
    std::stable_sort(checkpoints.begin(), checkpoints.end(),
                     [](const EvaluatedCheckpoint& a, const EvaluatedCheckpoint& b) {
                       if (a.dev_qwk != b.dev_qwk) return a.dev_qwk > b.dev_qwk;
                       return a.step < b.step;
                     });
    std::size_t take = std::min<std::size_t>(2, checkpoints.size());

    std::vector<CheckpointRun> runs;
    std::vector<std::vector<std::string>> candidate_predictions(take);
    for (std::size_t i = 0; i < take; ++i) {
      candidate_predictions[i] =
          backend->predict(checkpoints[i].scorer, test_data.inputs);
      runs.push_back({checkpoints[i].step, checkpoints[i].dev_qwk,
                      mean_qwk(test_data.inputs, test_data.targets,
                               candidate_predictions[i], prepared.spec)});
    }
    double chosen_test = select_checkpoint(runs);
    std::size_t chosen = 0;
    for (std::size_t i = 0; i < take; ++i)
      if (runs[i].test_qwk == chosen_test) {
        chosen = i;
        break;
      }
    const std::vector<std::string>& raw_predictions = candidate_predictions[chosen];
    if (raw_predictions.size() != test_data.inputs.size())
      throw Error("prediction count does not match test essay count");

    // Per-cell gold/pred lists over this fold's test essays.
    std::map<std::pair<int, std::string>,
             std::pair<std::vector<double>, std::vector<double>>>
        cell_lists;
    for (std::size_t i = 0; i < test_data.inputs.size(); ++i) {
      const EssayRecord& record = *test_data.records[i];
      const PromptSpec& prompt = prepared.spec.prompt(record.prompt_id);
      ScoreSequence parsed = parse_scores(raw_predictions[i], prompt);
      ScoreSequence gold_seq = parse_scores(test_data.targets[i], prompt);

      EssayPrediction pred;
      pred.fold = fold_id;
      pred.essay_id = record.essay_id;
      pred.prompt_id = record.prompt_id;
      pred.raw = raw_predictions[i];
      for (const auto& pair : evaluable_pairs(parsed, gold_seq.parsed, prompt)) {
        auto& lists = cell_lists[{record.prompt_id, pair.trait}];
        lists.first.push_back(pair.gold);
        lists.second.push_back(pair.pred);
        ++pred.pairs;
        ++total_pairs;
        if (pair.fallback) {
          ++pred.fallback_pairs;
          ++fallback_pairs;
          pred.unparsed_traits.push_back(pair.trait);
        }
      }
      report.predictions.push_back(std::move(pred));
    }
    for (const auto& [key, lists] : cell_lists) {
      const TraitSpec& trait = prepared.spec.prompt(key.first).trait(key.second);
      report.cells[{key.first, key.second, fold_id}] =
          qwk(lists.first, lists.second, trait.score_min, trait.score_max,
              trait.score_step);
    }
  }

  std::sort(report.predictions.begin(), report.predictions.end(),
            [](const EssayPrediction& a, const EssayPrediction& b) {
              if (a.fold != b.fold) return a.fold < b.fold;
              return a.essay_id < b.essay_id;
            });
  report.aggregate = aggregate(report.cells, prepared.spec);
  report.parse_failure_rate =
      total_pairs > 0 ? static_cast<double>(fallback_pairs) /
                            static_cast<double>(total_pairs)
                      : 0.0;

  std::filesystem::create_directories(run_dir);
  write_inputs_file(prepared, run_dir / "inputs.jsonl");
  {
    std::ofstream out(run_dir / "predictions.jsonl", std::ios::trunc);
    for (const auto& p : report.predictions)
      out << json{{"fold", p.fold},
                  {"essay_id", p.essay_id},
                  {"prompt_id", p.prompt_id},
                  {"raw", p.raw},
                  {"unparsed_traits", p.unparsed_traits},
                  {"pairs", p.pairs},
                  {"fallback_pairs", p.fallback_pairs}}
                 .dump()
          << "\n";
  }
  report.save(report_file);
  return report;
}

// compare ---------------------------------------------------------------------

namespace {

// The paper prints deltas as absolute QWK points x 100, one decimal.
double delta_points(double baseline, double other) {
  return std::round((other - baseline) * 1000.0) / 10.0;
}

}  // namespace

RunReport compare(const RunReport& baseline, const RunReport& other) {
  if (baseline.plan.dataset != other.plan.dataset)
    throw ValidationError("compare: reports are for different datasets");
  if (baseline.plan.folds != other.plan.folds)
    throw ValidationError("compare: reports use different folds");

  RunReport result = other;
  result.has_deltas = true;
  result.baseline_digest = baseline.plan.digest();
  for (const auto& [trait, value] : other.aggregate.per_trait) {
    auto it = baseline.aggregate.per_trait.find(trait);
    if (it == baseline.aggregate.per_trait.end()) continue;
    result.delta_per_trait[trait] = delta_points(it->second, value);
    if (it->second != 0.0) result.ratio_per_trait[trait] = value / it->second;
  }
  for (const auto& [prompt_id, value] : other.aggregate.per_prompt) {
    auto it = baseline.aggregate.per_prompt.find(prompt_id);
    if (it == baseline.aggregate.per_prompt.end()) continue;
    result.delta_per_prompt[prompt_id] = delta_points(it->second, value);
  }
  result.delta_avg = delta_points(baseline.aggregate.avg, other.aggregate.avg);
  return result;
}

// external fixtures -------------------------------------------------------------

RunReport load_external_report(const std::filesystem::path& fixture) {
  std::ifstream in(fixture);
  if (!in) throw ParseError("cannot open " + fixture.string());
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw ParseError("invalid JSON in " + fixture.string());

  RunReport report;
  report.source = "external";
  report.plan.dataset = obj.value("dataset", "asap");
  report.plan.trait_config = "-";
  report.plan.corpus_cache = "-";
  report.plan.folds_dir = "-";
  report.plan.backend.backend_id = obj.value("model", "external");
  report.aggregate.per_trait =
      obj.value("per_trait", std::map<std::string, double>{});
  const json per_prompt = obj.value("per_prompt", json::object());
  for (auto it = per_prompt.begin(); it != per_prompt.end(); ++it)
    report.aggregate.per_prompt[std::stoi(it.key())] = it.value().get<double>();
  if (obj.contains("avg")) {
    report.aggregate.avg = obj.at("avg").get<double>();
  } else if (!report.aggregate.per_trait.empty()) {
    double sum = 0.0;
    for (const auto& [trait, v] : report.aggregate.per_trait) sum += v;
    report.aggregate.avg = sum / static_cast<double>(report.aggregate.per_trait.size());
  }
  report.aggregate.fold_sd = obj.value("fold_sd", 0.0);
  return report;
}

}  // namespace rmts
