// rmts: multi-trait essay scoring pipeline driver.
//
// Subcommands: ingest, folds, render, manifest, rationale
// (generate|compress|stats|similarity), score, run, compare, report.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "rmts/corpus.hpp"
#include "rmts/errors.hpp"
#include "rmts/experiment_runner.hpp"
#include "rmts/jsonl.hpp"
#include "rmts/prompt_forge.hpp"
#include "rmts/rationale_engine.hpp"
#include "rmts/scoring_backend.hpp"
#include "rmts/sequence_codec.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace {

struct IngestArgs {
  std::string dataset;
  std::string input;
  std::string trait_config;
  std::vector<std::string> merge_tables;
  std::string out = "corpus.jsonl";
  std::string conflicts_out;
};

int cmd_ingest(const IngestArgs& args) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  std::vector<rmts::EssayRecord> records =
      args.dataset == "feedback" ? rmts::load_feedback(args.input, spec)
                                 : rmts::load_asap(args.input, spec);
  std::vector<rmts::MergeConflict> conflicts;
  for (const auto& table : args.merge_tables) {
    auto found = rmts::merge_trait_table(records, table, spec);
    conflicts.insert(conflicts.end(), found.begin(), found.end());
  }
  rmts::save_cache(records, args.out);
  std::cout << "wrote " << records.size() << " records to " << args.out << "\n";
  if (!conflicts.empty()) {
    json report = json::array();
    for (const auto& c : conflicts)
      report.push_back({{"essay_id", c.essay_id},
                        {"trait", c.trait},
                        {"kept", c.kept},
                        {"discarded", c.discarded}});
    std::string dest = args.conflicts_out.empty() ? args.out + ".conflicts.json"
                                                  : args.conflicts_out;
    std::ofstream out(dest, std::ios::trunc);
    out << report.dump(2) << "\n";
    std::cout << conflicts.size() << " merge conflicts recorded in " << dest << "\n";
  }
  return 0;
}

struct FoldsArgs {
  std::string cache;
  std::string out = "folds";
  std::uint64_t seed = 0;
  bool stratified = false;
};

int cmd_folds(const FoldsArgs& args) {
  auto records = rmts::load_cache(args.cache);
  auto folds = rmts::make_folds(records, 5, args.seed, args.stratified);
  rmts::save_folds(folds, args.out);
  std::cout << "wrote 5 folds for " << records.size() << " essays to " << args.out
            << "\n";
  return 0;
}

struct RenderArgs {
  std::string cache;
  std::string essay_id;
  std::string trait;
  std::string trait_config;
  std::string prompt_config;
  std::string variant = "excerpt_free";
};

int cmd_render(const RenderArgs& args) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  rmts::PromptConfig prompt_config = rmts::PromptConfig::load(args.prompt_config);
  prompt_config.apply(spec);
  auto records = rmts::load_cache(args.cache);
  for (const auto& rec : records) {
    if (rec.essay_id != args.essay_id) continue;
    const rmts::PromptSpec& prompt = spec.prompt(rec.prompt_id);
    auto rendered = rmts::render_trait_prompt(
        rec, prompt.trait(args.trait), prompt, prompt_config.templ,
        args.variant == "standard" ? rmts::PromptVariant::standard
                                   : rmts::PromptVariant::excerpt_free);
    std::cout << "--- system ---\n"
              << rendered.system_message << "\n--- user ---\n"
              << rendered.user_message << "\n--- content_hash: " << rendered.content_hash
              << " ---\n";
    return 0;
  }
  std::cerr << "essay " << args.essay_id << " not found in " << args.cache << "\n";
  return 1;
}

struct ManifestArgs {
  std::string trait_config;
  std::string out = "special_tokens.json";
};

int cmd_manifest(const ManifestArgs& args) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  auto tokens = rmts::SpecialTokenSet::for_dataset(spec);
  tokens.write_manifest(args.out);
  std::cout << "wrote " << tokens.markers.size() << " special tokens (version "
            << tokens.version() << ") to " << args.out << "\n";
  return 0;
}

struct RationaleArgs {
  std::string cache;
  std::string trait_config;
  std::string prompt_config;
  std::string rationale_cache = "rationales.jsonl";
  std::string generator = "synthetic";
  std::string replay_fixture;
  int iterations = 1;
  int sample = 0;  // 0 = all essays
  bool offline = false;
  std::uint64_t seed = 0;
  std::string tokenizer = "whitespace";
  int token_limit = 512;
  std::string out;
};

std::unique_ptr<rmts::ChatClient> make_client(const RationaleArgs& args) {
  if (args.offline) return rmts::make_offline_client(args.generator);
  if (args.generator == "synthetic" || args.generator == "synthetic:v1")
    return rmts::make_synthetic_client(args.seed);
  if (rmts::text::starts_with(args.generator, "openai:")) {
    rmts::HttpClientConfig config;
    config.model = args.generator.substr(7);
    if (const char* base = std::getenv("RMTS_OPENAI_BASE_URL")) config.base_url = base;
    return rmts::make_http_client(config);
  }
  if (rmts::text::starts_with(args.generator, "replay:")) {
    if (args.replay_fixture.empty())
      throw rmts::ConfigError("--replay-fixture is required for replay generators");
    return rmts::make_replay_client(args.replay_fixture, args.generator);
  }
  throw rmts::ConfigError("unknown generator '" + args.generator +
                          "' (use synthetic, openai:<model>, or replay:<id>)");
}

std::vector<rmts::EssayRecord> sample_records(const std::vector<rmts::EssayRecord>& all,
                                              int sample, std::uint64_t seed) {
  if (sample <= 0 || sample >= static_cast<int>(all.size())) return all;
  // Deterministic seed-keyed sample.
  std::vector<const rmts::EssayRecord*> sorted;
  for (const auto& rec : all) sorted.push_back(&rec);
  std::sort(sorted.begin(), sorted.end(),
            [&](const rmts::EssayRecord* a, const rmts::EssayRecord* b) {
              auto ha = rmts::text::fnv1a64(a->essay_id, seed);
              auto hb = rmts::text::fnv1a64(b->essay_id, seed);
              if (ha != hb) return ha < hb;
              return a->essay_id < b->essay_id;
            });
  std::vector<rmts::EssayRecord> out;
  for (int i = 0; i < sample; ++i) out.push_back(*sorted[i]);
  return out;
}

int cmd_rationale_generate(const RationaleArgs& args) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  rmts::PromptConfig prompt_config = rmts::PromptConfig::load(args.prompt_config);
  prompt_config.apply(spec);
  rmts::RationaleCache cache(args.rationale_cache);
  rmts::RationaleEngine engine(spec, prompt_config.templ, cache);
  auto client = make_client(args);
  rmts::GenerationSettings settings;

  auto records = sample_records(rmts::load_cache(args.cache), args.sample, args.seed);
  std::size_t failures = 0;
  for (const auto& rec : records) {
    for (int iteration = 0; iteration < std::max(1, args.iterations); ++iteration) {
      try {
        engine.generate(rec, *client, settings, iteration);
      } catch (const rmts::GenerationError& e) {
        ++failures;
        std::cerr << e.what() << "\n";
      }
    }
  }
  std::cout << "rationale cache now holds " << cache.size() << " rows (" << failures
            << " essays incomplete)\n";
  return failures == 0 ? 0 : 1;
}

int cmd_rationale_compress(const RationaleArgs& args) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  rmts::PromptConfig prompt_config = rmts::PromptConfig::load(args.prompt_config);
  prompt_config.apply(spec);
  rmts::RationaleCache cache(args.rationale_cache);
  rmts::RationaleEngine engine(spec, prompt_config.templ, cache);
  auto client = make_client(args);
  rmts::GenerationSettings settings;

  auto records = sample_records(rmts::load_cache(args.cache), args.sample, args.seed);
  std::size_t failures = 0;
  for (const auto& rec : records) {
    auto original = engine.from_cache(rec, args.generator, 0, false);
    if (!original) {
      std::cerr << "no cached rationale for essay " << rec.essay_id << "\n";
      ++failures;
      continue;
    }
    try {
      engine.compress(*original, *client, settings);
    } catch (const rmts::Error& e) {
      ++failures;
      std::cerr << e.what() << "\n";
    }
  }
  std::cout << "compression done, " << failures << " failures\n";
  return failures == 0 ? 0 : 1;
}

int cmd_rationale_stats(const RationaleArgs& args, bool compressed) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  rmts::PromptConfig prompt_config = rmts::PromptConfig::load(args.prompt_config);
  prompt_config.apply(spec);
  rmts::RationaleCache cache(args.rationale_cache);
  rmts::RationaleEngine engine(spec, prompt_config.templ, cache);

  std::vector<rmts::Rationale> rationales;
  for (const auto& rec : rmts::load_cache(args.cache)) {
    auto rationale = engine.from_cache(rec, args.generator, 0, compressed);
    if (rationale) rationales.push_back(*rationale);
  }
  auto report = rmts::length_stats(rationales, args.tokenizer,
                                   static_cast<std::size_t>(args.token_limit));
  json out = json::object();
  for (const auto& [generator, stats] : report) {
    json flagged = json::array();
    for (const auto& [essay_id, tokens] : stats.over_limit)
      flagged.push_back({{"essay_id", essay_id}, {"tokens", tokens}});
    out[generator] = {{"count", stats.count}, {"min", stats.min},
                      {"mean", stats.mean},   {"max", stats.max},
                      {"p25", stats.p25},     {"p50", stats.p50},
                      {"p75", stats.p75},     {"p95", stats.p95},
                      {"over_limit", flagged}};
    std::cout << generator << ": n=" << stats.count << " min=" << stats.min
              << " mean=" << stats.mean << " max=" << stats.max << " p95=" << stats.p95
              << " over_" << args.token_limit << "=" << stats.over_limit.size() << "\n";
  }
  if (!args.out.empty()) {
    std::ofstream file(args.out, std::ios::trunc);
    file << out.dump(2) << "\n";
  }
  return 0;
}

int cmd_rationale_similarity(const RationaleArgs& args, const std::string& variant) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  rmts::PromptConfig prompt_config = rmts::PromptConfig::load(args.prompt_config);
  prompt_config.apply(spec);
  rmts::RationaleCache cache(args.rationale_cache);
  rmts::RationaleEngine engine(spec, prompt_config.templ, cache);
  auto client = make_client(args);
  rmts::GenerationSettings settings;

  rmts::RougeVariant rouge_variant = variant == "rouge_1" ? rmts::RougeVariant::rouge_1
                                     : variant == "rouge_2"
                                         ? rmts::RougeVariant::rouge_2
                                         : rmts::RougeVariant::rouge_l;
  auto sample = sample_records(rmts::load_cache(args.cache),
                               args.sample > 0 ? args.sample : 100, args.seed);
  auto report = engine.similarity_study(sample, std::max(2, args.iterations),
                                        rouge_variant, *client, settings);
  std::cout << "generator=" << report.generator_id << " essays=" << report.n_essays
            << " iterations=" << report.iterations << " within=" << report.within
            << " between=" << report.between << "\n";
  if (!args.out.empty()) {
    std::ofstream file(args.out, std::ios::trunc);
    file << json{{"generator_id", report.generator_id},
                 {"variant", variant},
                 {"iterations", report.iterations},
                 {"n_essays", report.n_essays},
                 {"within", report.within},
                 {"between", report.between}}
                .dump(2)
         << "\n";
  }
  return 0;
}

struct ScoreArgs {
  std::string gold;
  std::string pred;
  std::string trait_config;
  std::string out = "score_report";
};

int cmd_score(const ScoreArgs& args) {
  rmts::DatasetSpec spec = rmts::DatasetSpec::load(args.trait_config);
  auto records = rmts::load_cache(args.gold);
  std::map<std::string, const rmts::EssayRecord*> by_id;
  for (const auto& rec : records) by_id[rec.essay_id] = &rec;

  // (prompt, trait, fold) -> gold/pred lists
  std::map<rmts::CellKey, std::pair<std::vector<double>, std::vector<double>>> lists;
  std::size_t total_pairs = 0, fallback_pairs = 0, rows = 0;
  rmts::jsonl::for_each(args.pred, [&](std::size_t lineno, const json& obj) {
    std::string essay_id = obj.at("essay_id").get<std::string>();
    auto it = by_id.find(essay_id);
    if (it == by_id.end())
      throw rmts::ValidationError("prediction for unknown essay " + essay_id +
                                  " (line " + std::to_string(lineno) + ")");
    const rmts::EssayRecord& rec = *it->second;
    const rmts::PromptSpec& prompt = spec.prompt(rec.prompt_id);
    int fold = obj.value("fold", 0);
    auto parsed = rmts::parse_scores(obj.at("raw").get<std::string>(), prompt);
    for (const auto& pair : rmts::evaluable_pairs(parsed, rec.gold_scores, prompt)) {
      auto& cell = lists[{rec.prompt_id, pair.trait, fold}];
      cell.first.push_back(pair.gold);
      cell.second.push_back(pair.pred);
      ++total_pairs;
      if (pair.fallback) ++fallback_pairs;
    }
    ++rows;
  });
  if (rows == 0) throw rmts::ValidationError("prediction file is empty");

  rmts::RunReport report;
  report.plan.dataset = spec.dataset;
  report.plan.trait_config = args.trait_config;
  report.plan.corpus_cache = args.gold;
  report.plan.folds_dir = "-";
  report.plan.backend.backend_id = "external-predictions";
  for (const auto& [key, cell] : lists) {
    const rmts::TraitSpec& trait = spec.prompt(std::get<0>(key)).trait(std::get<1>(key));
    report.cells[key] = rmts::qwk(cell.first, cell.second, trait.score_min,
                                  trait.score_max, trait.score_step);
  }
  report.aggregate = rmts::aggregate(report.cells, spec);
  report.parse_failure_rate =
      total_pairs ? static_cast<double>(fallback_pairs) / total_pairs : 0.0;

  auto files = rmts::emit_report(report, rmts::ReportFormat::table, args.out);
  std::cout << "avg QWK = " << report.aggregate.avg << " (fold SD "
            << report.aggregate.fold_sd << "), parse failure rate "
            << report.parse_failure_rate << "\n";
  for (const auto& file : files) std::cout << "wrote " << file.string() << "\n";
  return 0;
}

int cmd_run(const std::string& plan_file) {
  rmts::ExperimentPlan plan = rmts::ExperimentPlan::load(plan_file);
  auto report = rmts::run(plan);
  std::cout << "run " << plan.digest() << ": avg QWK = " << report.aggregate.avg
            << " (fold SD " << report.aggregate.fold_sd << "), parse failure rate "
            << report.parse_failure_rate << "\n";
  std::cout << "artifacts under "
            << (std::filesystem::path(plan.out_dir) / plan.digest()).string() << "\n";
  return 0;
}

struct CompareArgs {
  std::string baseline;
  std::string report;
  bool baseline_external = false;
  bool report_external = false;
  std::string out = "compared_report.json";
};

int cmd_compare(const CompareArgs& args) {
  auto load_report = [](const std::string& path, bool external) {
    return external ? rmts::load_external_report(path) : rmts::RunReport::load(path);
  };
  auto baseline = load_report(args.baseline, args.baseline_external);
  auto other = load_report(args.report, args.report_external);
  auto compared = rmts::compare(baseline, other);
  compared.save(args.out);
  std::cout << "avg delta: " << (compared.delta_avg >= 0 ? "+" : "")
            << compared.delta_avg << " QWK points x100\n";
  for (const auto& [trait, delta] : compared.delta_per_trait)
    std::cout << "  " << trait << ": " << (delta >= 0 ? "+" : "") << delta << "\n";
  std::cout << "wrote " << args.out << "\n";
  return 0;
}

struct ReportArgs {
  std::string report;
  std::string format = "table";
  std::string out = "report_out";
};

int cmd_report(const ReportArgs& args) {
  auto report = rmts::RunReport::load(args.report);
  auto files = rmts::emit_report(report,
                                 args.format == "plot-bundle" || args.format == "plots"
                                     ? rmts::ReportFormat::plot_bundle
                                     : rmts::ReportFormat::table,
                                 args.out);
  for (const auto& file : files) std::cout << "wrote " << file.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RMTS multi-trait essay scoring pipeline"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse and validate a corpus");
  ingest_cmd->add_option("--dataset", ingest.dataset, "asap | feedback")->required();
  ingest_cmd->add_option("--input", ingest.input, "TSV (asap) or CSV (feedback)")
      ->required();
  ingest_cmd->add_option("--trait-config", ingest.trait_config)->required();
  ingest_cmd->add_option("--merge-traits", ingest.merge_tables,
                         "secondary trait table(s) joined on essay id");
  ingest_cmd->add_option("--out", ingest.out);
  ingest_cmd->add_option("--conflicts", ingest.conflicts_out);

  FoldsArgs folds;
  auto* folds_cmd = app.add_subcommand("folds", "Write 5-fold 60/20/20 splits");
  folds_cmd->add_option("--cache", folds.cache)->required();
  folds_cmd->add_option("--out", folds.out);
  folds_cmd->add_option("--seed", folds.seed);
  folds_cmd->add_flag("--stratified", folds.stratified);

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Print a trait prompt verbatim");
  render_cmd->add_option("--cache", render.cache)->required();
  render_cmd->add_option("--essay-id", render.essay_id)->required();
  render_cmd->add_option("--trait", render.trait)->required();
  render_cmd->add_option("--trait-config", render.trait_config)->required();
  render_cmd->add_option("--prompt-config", render.prompt_config)->required();
  render_cmd->add_option("--variant", render.variant, "standard | excerpt_free");

  ManifestArgs manifest;
  auto* manifest_cmd =
      app.add_subcommand("manifest", "Export the special-token inventory");
  manifest_cmd->add_option("--trait-config", manifest.trait_config)->required();
  manifest_cmd->add_option("--out", manifest.out);

  RationaleArgs rationale;
  std::string rouge_variant = "rouge_l";
  bool stats_compressed = false;
  auto* rationale_cmd = app.add_subcommand("rationale", "Rationale operations");
  rationale_cmd->require_subcommand(1);
  auto add_rationale_options = [&](CLI::App* cmd) {
    cmd->add_option("--cache", rationale.cache, "corpus cache")->required();
    cmd->add_option("--trait-config", rationale.trait_config)->required();
    cmd->add_option("--prompt-config", rationale.prompt_config)->required();
    cmd->add_option("--rationale-cache", rationale.rationale_cache);
    cmd->add_option("--generator", rationale.generator,
                    "synthetic | openai:<model> | replay:<id>");
    cmd->add_option("--replay-fixture", rationale.replay_fixture);
    cmd->add_option("--iterations", rationale.iterations);
    cmd->add_option("--sample", rationale.sample);
    cmd->add_flag("--offline", rationale.offline, "serve from cache only");
    cmd->add_option("--seed", rationale.seed);
    cmd->add_option("--out", rationale.out, "write a JSON report here");
  };
  auto* gen_cmd = rationale_cmd->add_subcommand("generate", "Generate trait rationales");
  add_rationale_options(gen_cmd);
  auto* compress_cmd =
      rationale_cmd->add_subcommand("compress", "Compress cached rationales");
  add_rationale_options(compress_cmd);
  auto* stats_cmd = rationale_cmd->add_subcommand("stats", "Token-length statistics");
  add_rationale_options(stats_cmd);
  stats_cmd->add_option("--tokenizer", rationale.tokenizer);
  stats_cmd->add_option("--token-limit", rationale.token_limit);
  stats_cmd->add_flag("--compressed", stats_compressed);
  auto* sim_cmd =
      rationale_cmd->add_subcommand("similarity", "Within/between ROUGE study");
  add_rationale_options(sim_cmd);
  sim_cmd->add_option("--variant", rouge_variant, "rouge_1 | rouge_2 | rouge_l");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score predictions against gold");
  score_cmd->add_option("--gold", score.gold, "corpus cache with gold scores")
      ->required();
  score_cmd->add_option("--pred", score.pred, "JSONL: {essay_id, fold, raw}")
      ->required();
  score_cmd->add_option("--trait-config", score.trait_config)->required();
  score_cmd->add_option("--out", score.out);

  std::string plan_file;
  auto* run_cmd = app.add_subcommand("run", "Execute an experiment plan");
  run_cmd->add_option("--plan", plan_file)->required();
  run_cmd->add_flag("--offline",
                    "no-op; runs always execute offline against warm caches");

  CompareArgs compare_args;
  auto* compare_cmd = app.add_subcommand("compare", "Delta two run reports");
  compare_cmd->add_option("--baseline", compare_args.baseline)->required();
  compare_cmd->add_option("--report", compare_args.report)->required();
  compare_cmd->add_flag("--baseline-external", compare_args.baseline_external,
                        "baseline is a published-cells fixture");
  compare_cmd->add_flag("--report-external", compare_args.report_external);
  compare_cmd->add_option("--out", compare_args.out);

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Emit tables or plots for a run");
  report_cmd->add_option("--report", report_args.report)->required();
  report_cmd->add_option("--format", report_args.format, "table | plot-bundle");
  report_cmd->add_option("--out", report_args.out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return cmd_ingest(ingest);
    if (*folds_cmd) return cmd_folds(folds);
    if (*render_cmd) return cmd_render(render);
    if (*manifest_cmd) return cmd_manifest(manifest);
    if (*gen_cmd) return cmd_rationale_generate(rationale);
    if (*compress_cmd) return cmd_rationale_compress(rationale);
    if (*stats_cmd) return cmd_rationale_stats(rationale, stats_compressed);
    if (*sim_cmd) return cmd_rationale_similarity(rationale, rouge_variant);
    if (*score_cmd) return cmd_score(score);
    if (*run_cmd) return cmd_run(plan_file);
    if (*compare_cmd) return cmd_compare(compare_args);
    if (*report_cmd) return cmd_report(report_args);
  } catch (const rmts::MissingRationalesError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& [essay_id, trait] : e.missing())
      std::cerr << "  missing: essay " << essay_id << ", trait " << trait << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
