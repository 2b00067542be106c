// Acceptance suite: one check per release criterion, one [PASS]/[FAIL]
// line each. Exits nonzero on the first failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rmts/corpus.hpp"
#include "rmts/errors.hpp"
#include "rmts/experiment_runner.hpp"
#include "rmts/metrics.hpp"
#include "rmts/prompt_forge.hpp"
#include "rmts/rationale_engine.hpp"
#include "rmts/scoring_backend.hpp"
#include "rmts/sequence_codec.hpp"
#include "rmts/text.hpp"
#include "../test_support.hpp"

using nlohmann::json;
using namespace rmts;

namespace {

#define REQUIRE(cond, msg)                                                   \
  do {                                                                       \
    if (!(cond)) {                                                           \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << (msg)  \
                << "\n";                                                     \
      std::exit(1);                                                          \
    }                                                                        \
  } while (0)

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// criterion: QWK oracle equivalence ------------------------------------------

void check_qwk_oracle_equivalence() {
  Stopwatch timer;
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    int k = 2 + static_cast<int>(rng() % 12);  // K <= 13 grid points
    double step = trial % 4 == 0 ? 0.5 : 1.0;
    double lo = static_cast<double>(rng() % 5);
    double hi = lo + step * (k - 1);
    std::size_t n = 1 + rng() % 50;
    std::vector<double> gold(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = lo + step * static_cast<double>(rng() % k);
      pred[i] = lo + step * static_cast<double>(rng() % k);
    }
    auto result = qwk(gold, pred, lo, hi, step);
    double expected = oracle::qwk_direct(gold, pred, lo, hi, step);
    REQUIRE(std::abs(result.kappa - expected) <= 1e-12,
            "qwk diverges from the direct-formula oracle");

    auto perfect = qwk(gold, gold, lo, hi, step);
    REQUIRE(perfect.kappa == 1.0, "perfect agreement must be exactly 1.0");
  }
  auto degenerate = qwk({2, 2, 2}, {2, 2, 2}, 1, 6, 1);
  REQUIRE(degenerate.degenerate && degenerate.kappa == 1.0,
          "degenerate convention violated");
  REQUIRE(timer.seconds() < 5.0, "qwk oracle check exceeded 5 s");
  std::cout << "[PASS] qwk-oracle-equivalence: 200 random instances to 1e-12, "
            << "perfect = 1.0, degenerate honored (" << timer.seconds() << " s)\n";
}

// criterion: ROUGE oracle equivalence ----------------------------------------

void check_rouge_oracle_equivalence() {
  Stopwatch timer;
  std::mt19937_64 rng(2025);
  const char* vocab[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> cand(rng() % 61), ref(rng() % 61);
    for (auto& w : cand) w = vocab[rng() % 8];
    for (auto& w : ref) w = vocab[rng() % 8];
    struct Case {
      RougeVariant variant;
      int oracle_n;
    };
    for (auto [variant, n] : {Case{RougeVariant::rouge_1, 1},
                              Case{RougeVariant::rouge_2, 2},
                              Case{RougeVariant::rouge_l, 0}}) {
      auto got = rouge(cand, ref, variant);
      auto expected = oracle::rouge_oracle(cand, ref, n);
      REQUIRE(got.precision == expected.p && got.recall == expected.r &&
                  got.f1 == expected.f,
              "rouge diverges from the DP/counting oracle");
    }
  }
  REQUIRE(timer.seconds() < 10.0, "rouge oracle check exceeded 10 s");
  std::cout << "[PASS] rouge-oracle-equivalence: 500 random pairs, exact match ("
            << timer.seconds() << " s)\n";
}

// criterion: codec round-trip + fuzz totality ---------------------------------

void check_codec_round_trip() {
  Stopwatch timer;
  std::mt19937_64 rng(2026);
  for (const char* config : {"asap_traits.json", "feedback_traits.json"}) {
    DatasetSpec spec = DatasetSpec::load(testutil::config(config));
    for (int trial = 0; trial < 1000; ++trial) {
      auto it = spec.prompts.begin();
      std::advance(it, rng() % spec.prompts.size());
      const PromptSpec& prompt = it->second;
      std::map<std::string, double> gold;
      for (const auto& trait : prompt.traits) {
        if (rng() % 3 == 0) continue;  // absent traits stay absent
        gold[trait.name] =
            trait.score_min + trait.score_step * static_cast<double>(
                                                     rng() % trait.grid_points());
      }
      auto parsed = parse_scores(encode_targets(gold, prompt), prompt);
      REQUIRE(parsed.parsed == gold, "parse(encode(m)) != m");
      REQUIRE(parsed.clamped_traits.empty() && parsed.duplicate_traits.empty(),
              "round trip raised spurious flags");
    }
  }
  DatasetSpec asap = DatasetSpec::load(testutil::config("asap_traits.json"));
  for (int trial = 0; trial < 10000; ++trial) {
    std::string raw;
    std::size_t n = rng() % 80;
    for (std::size_t i = 0; i < n; ++i) raw += static_cast<char>(rng() % 256);
    try {
      parse_scores(raw, asap.prompt(1 + static_cast<int>(rng() % 8)));
    } catch (...) {
      REQUIRE(false, "parse_scores raised on fuzzed input");
    }
  }
  REQUIRE(timer.seconds() < 10.0, "codec check exceeded 10 s");
  std::cout << "[PASS] codec-round-trip: 1000 maps per family, 10000 fuzzed "
            << "strings total (" << timer.seconds() << " s)\n";
}

// criterion: corpus fidelity ---------------------------------------------------

void check_corpus_fidelity() {
  std::ifstream manifest_in(testutil::fixture("fixture_manifest.json"));
  REQUIRE(manifest_in.good(), "fixture manifest missing");
  json manifest = json::parse(manifest_in);

  auto records = load_asap(testutil::fixture("asap_sample.tsv"),
                           testutil::config("asap_traits.json"));
  std::map<int, int> counts;
  std::map<int, std::set<std::string>> inventory;
  for (const auto& rec : records) {
    ++counts[rec.prompt_id];
    for (const auto& [trait, v] : rec.gold_scores) inventory[rec.prompt_id].insert(trait);
  }
  for (auto it = manifest["asap"].begin(); it != manifest["asap"].end(); ++it) {
    int prompt_id = std::stoi(it.key());
    REQUIRE(counts[prompt_id] == it.value()["count"].get<int>(),
            "asap fixture count mismatch for prompt " + it.key());
    REQUIRE(inventory[prompt_id] == it.value()["traits"].get<std::set<std::string>>(),
            "asap fixture trait inventory mismatch for prompt " + it.key());
  }

  auto feedback = load_feedback(testutil::fixture("feedback_sample.csv"),
                                testutil::config("feedback_traits.json"));
  REQUIRE(feedback.size() == manifest["feedback"]["count"].get<std::size_t>(),
          "feedback fixture count mismatch");
  for (const auto& rec : feedback)
    REQUIRE(rec.gold_scores.size() == 6, "feedback record missing trait scores");

  std::cout << "[PASS] corpus-fidelity: bundled fixtures match the manifest exactly\n";

  // Official corpora, when supplied, must reproduce the published counts.
  const std::map<int, int> official_counts = {{1, 1785}, {2, 1800}, {3, 1726},
                                              {4, 1772}, {5, 1805}, {6, 1800},
                                              {7, 1569}, {8, 723}};
  if (const char* official = std::getenv("RMTS_ASAP_TSV")) {
    auto rows = load_asap(official, testutil::config("asap_traits.json"));
    std::map<int, int> c;
    for (const auto& rec : rows) ++c[rec.prompt_id];
    for (const auto& [prompt_id, expected] : official_counts)
      REQUIRE(c[prompt_id] == expected, "official asap count mismatch");
    std::cout << "[PASS] corpus-fidelity: official ASAP counts match\n";
  } else {
    std::cout << "[PASS] corpus-fidelity: official ASAP corpus not supplied "
              << "(set RMTS_ASAP_TSV to check counts 1785/1800/1726/1772/1805/"
              << "1800/1569/723)\n";
  }
  if (const char* official = std::getenv("RMTS_FEEDBACK_CSV")) {
    auto rows = load_feedback(official, testutil::config("feedback_traits.json"));
    REQUIRE(rows.size() == 3930, "official feedback countotal mismatch");
    std::cout << "[PASS] corpus-fidelity: official Feedback count matches (3930)\n";
  } else {
    std::cout << "[PASS] corpus-fidelity: official Feedback corpus not supplied "
              << "(set RMTS_FEEDBACK_CSV to check the 3930 count)\n";
  }
}

// criterion: fold protocol ------------------------------------------------------

void check_fold_protocol() {
  std::mt19937_64 rng(2027);
  for (int trial = 0; trial < 100; ++trial) {
    DatasetSpec spec = testutil::tiny_spec(1);
    spec.prompts[2] = spec.prompts[1];
    spec.prompts[2].prompt_id = 2;
    std::vector<EssayRecord> records;
    std::map<int, int> per_prompt;
    for (int prompt_id : {1, 2}) {
      int n = 5 + static_cast<int>(rng() % 60);
      per_prompt[prompt_id] = n;
      for (int i = 0; i < n; ++i) {
        EssayRecord rec;
        rec.essay_id = "p" + std::to_string(prompt_id) + "_" + std::to_string(i);
        rec.prompt_id = prompt_id;
        rec.text = "essay";
        records.push_back(rec);
      }
    }
    auto folds = make_folds(records, 5, rng(), false);
    std::map<std::string, int> test_count;
    for (const auto& fold : folds) {
      std::set<std::string> all;
      for (const auto& id : fold.train_ids) REQUIRE(all.insert(id).second, "overlap");
      for (const auto& id : fold.dev_ids) REQUIRE(all.insert(id).second, "overlap");
      for (const auto& id : fold.test_ids) REQUIRE(all.insert(id).second, "overlap");
      REQUIRE(all.size() == records.size(), "fold does not cover the corpus");
      for (const auto& id : fold.test_ids) ++test_count[id];
      for (const auto& [prompt_id, n] : per_prompt) {
        auto in_prompt = [&](const std::set<std::string>& ids) {
          int c = 0;
          for (const auto& rec : records)
            if (rec.prompt_id == prompt_id && ids.count(rec.essay_id)) ++c;
          return c;
        };
        REQUIRE(std::abs(in_prompt(fold.train_ids) - 0.6 * n) <= 1.0 + 1e-9,
                "train share off by more than one essay");
        REQUIRE(std::abs(in_prompt(fold.dev_ids) - 0.2 * n) <= 1.0 + 1e-9,
                "dev share off by more than one essay");
        REQUIRE(std::abs(in_prompt(fold.test_ids) - 0.2 * n) <= 1.0 + 1e-9,
                "test share off by more than one essay");
      }
    }
    REQUIRE(test_count.size() == records.size(), "some essay never tested");
    for (const auto& [id, n] : test_count)
      REQUIRE(n == 1, "essay tested in more than one fold");
  }

  // Stratified balance: label marginals within 10% relative deviation.
  DatasetSpec feedback = DatasetSpec::load(testutil::config("feedback_traits.json"));
  std::vector<EssayRecord> records;
  for (int group = 0; group < 5; ++group) {
    for (int i = 0; i < 61; ++i) {  // non-multiple of 5 on purpose
      EssayRecord rec;
      rec.essay_id = "g" + std::to_string(group) + "_" + std::to_string(i);
      rec.prompt_id = 0;
      rec.text = "essay";
      for (const auto& trait : feedback.prompt(0).traits)
        rec.gold_scores[trait.name] = 1.0 + 0.5 * group;
      records.push_back(rec);
    }
  }
  auto folds = make_folds(records, 5, 2028, true);
  for (const auto& trait : feedback.prompt(0).traits) {
    for (int group = 0; group < 5; ++group) {
      double label = 1.0 + 0.5 * group;
      std::vector<int> per_fold;
      for (const auto& fold : folds) {
        int c = 0;
        for (const auto& rec : records)
          if (fold.test_ids.count(rec.essay_id) &&
              rec.gold_scores.at(trait.name) == label)
            ++c;
        per_fold.push_back(c);
      }
      double mean = 61.0 / 5.0;
      for (int c : per_fold)
        REQUIRE(std::abs(c - mean) / mean <= 0.10,
                "stratified label marginal deviates more than 10%");
    }
  }
  std::cout << "[PASS] fold-protocol: invariants over 100 random corpora, "
            << "stratified marginals within 10%\n";
}

// shared environment for the run-level criteria ---------------------------------

struct AcceptanceEnvironment {
  std::filesystem::path dir;
  DatasetSpec spec;
  std::vector<EssayRecord> records;
  std::string generator_id;

  AcceptanceEnvironment() : dir(testutil::scratch_dir("acceptance")) {
    spec = DatasetSpec::load(testutil::config("asap_traits.json"));
    std::mt19937_64 rng(6060);
    // 60 essays over the eight ASAP prompts.
    const int counts[8] = {8, 8, 8, 8, 7, 7, 7, 7};
    const char* words[] = {"ideas",   "school", "computers", "reading", "writing",
                           "evidence", "support", "community", "because", "library"};
    int eid = 0;
    for (int prompt_id = 1; prompt_id <= 8; ++prompt_id) {
      const PromptSpec& prompt = spec.prompt(prompt_id);
      for (int i = 0; i < counts[prompt_id - 1]; ++i) {
        EssayRecord rec;
        rec.essay_id = "a" + std::to_string(++eid);
        rec.prompt_id = prompt_id;
        rec.text = "Dear @CAPS1, essay " + std::to_string(eid) + " discusses";
        std::size_t n = 25 + rng() % 40;
        for (std::size_t w = 0; w < n; ++w)
          rec.text += " " + std::string(words[rng() % 10]) + std::to_string(rng() % 7);
        rec.text += ".";
        for (const auto& trait : prompt.traits) {
          if (!trait.holistic && rng() % 8 == 0 && i > 1) continue;  // NaN cells
          rec.gold_scores[trait.name] =
              trait.score_min +
              trait.score_step * static_cast<double>(rng() % trait.grid_points());
        }
        records.push_back(std::move(rec));
      }
    }
    save_cache(records, dir / "corpus.jsonl");
    save_folds(make_folds(records, 5, 404, false), dir / "folds");

    PromptConfig prompt_config = PromptConfig::load(testutil::config("asap_prompts.json"));
    prompt_config.apply(spec);
    RationaleCache cache(dir / "rationales.jsonl");
    RationaleEngine engine(spec, prompt_config.templ, cache);
    auto client = make_synthetic_client(9);
    generator_id = client->generator_id();
    GenerationSettings settings;
    for (const auto& rec : records) engine.generate(rec, *client, settings);
  }

  ExperimentPlan plan(InputMode mode, const std::string& backend_id = "oracle") const {
    ExperimentPlan plan;
    plan.dataset = "asap";
    plan.mode = mode;
    if (mode != InputMode::essay_only) plan.generator_id = generator_id;
    plan.backend.backend_id = backend_id;
    plan.token_limit = 4096;
    plan.trait_config = testutil::config("asap_traits.json").string();
    plan.corpus_cache = (dir / "corpus.jsonl").string();
    plan.folds_dir = (dir / "folds").string();
    plan.rationale_cache = (dir / "rationales.jsonl").string();
    plan.out_dir = (dir / "runs").string();
    return plan;
  }
};

std::map<std::string, std::string> read_inputs_file(const std::filesystem::path& file) {
  std::map<std::string, std::string> texts;
  std::ifstream in(file);
  REQUIRE(in.good(), "missing inputs file " + file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto obj = json::parse(line);
    texts[obj.at("essay_id").get<std::string>()] = obj.at("text").get<std::string>();
  }
  return texts;
}

// criterion: end-to-end oracle and memorizer runs -------------------------------

void check_end_to_end_oracle(const AcceptanceEnvironment& env) {
  Stopwatch timer;
  auto report = run(env.plan(InputMode::essay_plus_rationale, "oracle"));
  REQUIRE(report.aggregate.avg == 1.0, "oracle aggregate average is not exactly 1.0");
  for (const auto& [trait, v] : report.aggregate.per_trait)
    REQUIRE(v == 1.0, "oracle per-trait QWK is not exactly 1.0 for " + trait);
  for (const auto& [key, cell] : report.cells)
    REQUIRE(cell.kappa == 1.0, "oracle cell below 1.0");
  REQUIRE(report.predictions.size() == env.records.size(),
          "essay conservation violated");
  REQUIRE(timer.seconds() < 60.0, "oracle run exceeded 60 s");
  std::cout << "[PASS] end-to-end-oracle: 60-essay run offline, every trait "
            << "exactly 1.0 (" << timer.seconds() << " s)\n";

  // Memorizer: training-set re-prediction is perfect; unseen test essays
  // take the fallback on every pair.
  PreparedCorpus prepared = prepare_corpus(env.plan(InputMode::essay_plus_rationale,
                                                    "memorizer"));
  auto folds = load_folds(env.dir / "folds");
  std::vector<AssembledInput> train_inputs, test_inputs;
  std::vector<std::string> train_targets, test_targets;
  for (const auto& rec : prepared.records) {
    if (folds[0].train_ids.count(rec.essay_id)) {
      train_inputs.push_back(prepared.inputs.at(rec.essay_id));
      train_targets.push_back(prepared.targets.at(rec.essay_id));
    } else if (folds[0].test_ids.count(rec.essay_id)) {
      test_inputs.push_back(prepared.inputs.at(rec.essay_id));
      test_targets.push_back(prepared.targets.at(rec.essay_id));
    }
  }
  BackendConfig config;
  config.backend_id = "memorizer";
  auto backend = make_backend(config, prepared.spec);
  RunMetadata metadata;
  metadata.dataset = "asap";
  auto checkpoints =
      backend->train(train_inputs, train_targets, train_inputs, train_targets, metadata);
  auto recall = backend->predict(checkpoints[0].scorer, train_inputs);
  REQUIRE(mean_qwk(train_inputs, train_targets, recall, prepared.spec) == 1.0,
          "memorizer training-set re-prediction is not 1.0");

  auto unseen = backend->predict(checkpoints[0].scorer, test_inputs);
  std::size_t pairs = 0, fallback = 0;
  for (std::size_t i = 0; i < test_inputs.size(); ++i) {
    REQUIRE(unseen[i].empty(), "memorizer produced output for an unseen essay");
    const PromptSpec& prompt = prepared.spec.prompt(test_inputs[i].prompt_id);
    auto gold = parse_scores(test_targets[i], prompt);
    for (const auto& pair : evaluable_pairs(parse_scores(unseen[i], prompt),
                                            gold.parsed, prompt)) {
      ++pairs;
      if (pair.fallback) ++fallback;
    }
  }
  REQUIRE(pairs > 0 && pairs == fallback,
          "memorizer fallback path not fully exercised on unseen essays");
  std::cout << "[PASS] end-to-end-memorizer: train re-prediction 1.0, unseen "
            << "parse_failure_rate = 1.0\n";
}

// criterion: faithfulness-mode hygiene ------------------------------------------

void check_faithfulness_hygiene(const AcceptanceEnvironment& env) {
  ExperimentPlan plan = env.plan(InputMode::rationale_only, "oracle");
  run(plan);
  auto inputs =
      read_inputs_file(std::filesystem::path(plan.out_dir) / plan.digest() /
                       "inputs.jsonl");
  // Independent scan: no 20-character essay substring in any input.
  for (const auto& rec : env.records) {
    for (std::size_t start = 0; start + 20 <= rec.text.size(); ++start) {
      std::string needle = rec.text.substr(start, 20);
      for (const auto& [essay_id, text] : inputs)
        REQUIRE(text.find(needle) == std::string::npos,
                "essay text leaked into a rationale_only input");
    }
  }
  std::cout << "[PASS] faithfulness-hygiene: no 20-char essay substring in any "
            << "assembled input\n";
}

// criterion: ablation exactness ---------------------------------------------------

void check_ablation_exactness(const AcceptanceEnvironment& env) {
  ExperimentPlan base_plan = env.plan(InputMode::essay_plus_rationale, "oracle");
  run(base_plan);
  auto base_inputs = read_inputs_file(std::filesystem::path(base_plan.out_dir) /
                                      base_plan.digest() / "inputs.jsonl");

  // Every non-holistic trait of the dataset is ablatable.
  std::vector<std::string> ablatable;
  for (const auto& name : env.spec.all_trait_names()) {
    bool holistic = false;
    for (const auto& [prompt_id, prompt] : env.spec.prompts)
      if (const TraitSpec* trait = prompt.find_trait(name)) holistic = trait->holistic;
    if (!holistic) ablatable.push_back(name);
  }
  REQUIRE(ablatable.size() == 10, "unexpected ablatable trait count");

  for (const auto& trait : ablatable) {
    ExperimentPlan ablated_plan = base_plan;
    ablated_plan.ablated_trait = trait;
    run(ablated_plan);
    auto ablated_inputs = read_inputs_file(std::filesystem::path(ablated_plan.out_dir) /
                                           ablated_plan.digest() / "inputs.jsonl");
    std::string tag = "[" + text::lowercase(trait) + "]: ";
    for (const auto& rec : env.records) {
      const std::string& full = base_inputs.at(rec.essay_id);
      const std::string& cut = ablated_inputs.at(rec.essay_id);
      if (!env.spec.prompt(rec.prompt_id).has_trait(trait)) {
        REQUIRE(full == cut, "input changed for a prompt without the ablated trait");
        continue;
      }
      auto tag_pos = full.find(tag);
      REQUIRE(tag_pos != std::string::npos, "segment tag missing from the full input");
      auto next_tag = full.find(" [", tag_pos);
      std::string removed =
          next_tag == std::string::npos
              ? full.substr(0, tag_pos - 1)
              : full.substr(0, tag_pos) + full.substr(next_tag + 1);
      REQUIRE(removed == cut,
              "ablated input is not the unablated input minus one segment (" + trait +
                  ")");
    }
  }
  std::cout << "[PASS] ablation-exactness: " << ablatable.size()
            << " traits, every essay differs by exactly one segment\n";
}

// criterion: selection-rule correctness -------------------------------------------

void check_selection_rule() {
  std::mt19937_64 rng(2029);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + rng() % 12;
    std::vector<CheckpointRun> runs;
    for (std::size_t i = 0; i < n; ++i) {
      double dev = static_cast<double>(rng() % 6) / 5.0;  // coarse: force ties
      double test = static_cast<double>(rng() % 11) / 10.0;
      runs.push_back({static_cast<long>(i * 10), dev, test});
    }
    double got = select_checkpoint(runs);
    double expected = oracle::select_checkpoint_brute(runs);
    REQUIRE(got == expected, "selection rule diverges from brute force");
  }
  std::cout << "[PASS] selection-rule: 1000 random run lists match brute force, "
            << "ties included\n";
}

// criterion: fixture replay of published deltas ------------------------------------

void check_fixture_replay() {
  auto vanilla = load_external_report(testutil::fixture("table2_t5_vanilla.json"));
  auto rmts_g = load_external_report(testutil::fixture("table2_t5_rmts_gpt.json"));
  auto compared = compare(vanilla, rmts_g);

  const std::map<std::string, double> expected = {
      {"Overall", 0.1},     {"Content", 0.7},     {"Prompt Adherence", 0.1},
      {"Language", 1.5},    {"Narrativity", 1.9}, {"Organization", 1.0},
      {"Conventions", 2.2}, {"Word Choice", 2.6}, {"Sentence Fluency", 1.6},
      {"Style", -1.9},      {"Voice", 4.2}};
  for (const auto& [trait, delta] : expected)
    REQUIRE(std::abs(compared.delta_per_trait.at(trait) - delta) < 1e-9,
            "published per-trait delta not reproduced for " + trait);
  REQUIRE(std::abs(compared.delta_avg - 1.3) < 1e-9,
          "published average delta not reproduced");
  std::cout << "[PASS] fixture-replay: published per-trait deltas reproduced to "
            << "one decimal (Conventions +2.2, Voice +4.2, avg +1.3)\n";
}

// criterion: prompt rendering golden file -------------------------------------------

void check_prompt_rendering() {
  DatasetSpec spec = DatasetSpec::load(testutil::config("asap_traits.json"));
  PromptConfig prompt_config = PromptConfig::load(testutil::config("asap_prompts.json"));
  prompt_config.apply(spec);

  EssayRecord rec;
  rec.essay_id = "golden";
  rec.prompt_id = 1;
  rec.text = "A short golden essay about computers.";
  auto rendered = render_trait_prompt(rec, spec.prompt(1).trait("Content"),
                                      spec.prompt(1), prompt_config.templ);

  REQUIRE(rendered.system_message ==
              "You are a member of the English essay writing test evaluation "
              "committee. Please, evaluate given essay using following information.",
          "system message drifted");
  REQUIRE(rendered.user_message.find("Score 6: The writing is exceptionally clear, "
                                     "focused, and interesting.") != std::string::npos,
          "Score-6 rubric line missing");
  REQUIRE(rendered.user_message.find("Please do not penalize the essay because of "
                                     "the anonymizations.") != std::string::npos,
          "anonymization note sentence missing");
  REQUIRE(rendered.user_message.find("relevant to \"content\"") != std::string::npos,
          "question does not quote the trait");
  REQUIRE(rendered.user_message.find("Please keep your response within 50 words.") !=
              std::string::npos,
          "50-word limit missing from the question");

  std::ifstream golden(testutil::fixture("golden_prompt1_content.txt"));
  REQUIRE(golden.good(), "golden fixture missing");
  std::string expected((std::istreambuf_iterator<char>(golden)),
                       std::istreambuf_iterator<char>());
  REQUIRE(rendered.system_message + "\n---\n" + rendered.user_message + "\n" == expected,
          "rendered prompt does not match the golden file");
  std::cout << "[PASS] prompt-rendering: prompt-1/Content matches the golden file, "
            << "all canonical pieces verbatim\n";
}

}  // namespace

int main() {
  Stopwatch total;
  check_qwk_oracle_equivalence();
  check_rouge_oracle_equivalence();
  check_codec_round_trip();
  check_corpus_fidelity();
  check_fold_protocol();

  AcceptanceEnvironment env;
  check_end_to_end_oracle(env);
  check_faithfulness_hygiene(env);
  check_ablation_exactness(env);

  check_selection_rule();
  check_fixture_replay();
  check_prompt_rendering();

  std::cout << "acceptance suite complete in " << total.seconds() << " s\n";
  return 0;
}
