#include <doctest.h>

#include <atomic>
#include <random>

#include "rmts/errors.hpp"
#include "rmts/rationale_engine.hpp"
#include "rmts/text.hpp"
#include "test_support.hpp"

using namespace rmts;

namespace {

// Counts calls and can be scripted to fail.
class CountingClient : public ChatClient {
 public:
  explicit CountingClient(std::unique_ptr<ChatClient> inner)
      : inner_(std::move(inner)) {}
  std::string generator_id() const override { return inner_->generator_id(); }
  ChatResult complete(const std::string& system, const std::string& user,
                      const GenerationSettings& settings) override {
    ++calls;
    if (fail_all) throw Error("scripted provider failure");
    if (empty_completions) return {"", 0, 0};
    return inner_->complete(system, user, settings);
  }
  std::atomic<int> calls{0};
  bool fail_all = false;
  bool empty_completions = false;

 private:
  std::unique_ptr<ChatClient> inner_;
};

struct EngineSetup {
  DatasetSpec spec;
  PromptConfig prompt_config;
  std::filesystem::path dir;
  RationaleCache cache;
  RationaleEngine engine;

  explicit EngineSetup(const std::string& label,
                       const std::string& traits = "asap_traits.json",
                       const std::string& prompts = "asap_prompts.json")
      : spec(DatasetSpec::load(testutil::config(traits))),
        prompt_config(PromptConfig::load(testutil::config(prompts))),
        dir(testutil::scratch_dir(label)),
        cache(dir / "rationales.jsonl"),
        engine((prompt_config.apply(spec), spec), prompt_config.templ, cache) {}
};

EssayRecord asap_essay(int prompt_id = 1) {
  EssayRecord rec;
  rec.essay_id = "e" + std::to_string(prompt_id);
  rec.prompt_id = prompt_id;
  rec.text = "Dear @CAPS1, computers help people learn, talk with friends, and "
             "finish work faster than writing by hand.";
  return rec;
}

GenerationSettings fast_settings() {
  GenerationSettings settings;
  settings.max_retries = 2;
  return settings;
}

}  // namespace

TEST_CASE("generate: one segment per trait in decode order, prompt 1") {
  EngineSetup setup("gen_p1");
  auto client = make_synthetic_client(1);
  auto rationale = setup.engine.generate(asap_essay(1), *client, fast_settings());
  REQUIRE(rationale.segments.size() == 5);
  std::vector<std::string> tags;
  for (const auto& seg : rationale.segments) {
    CHECK_FALSE(seg.text.empty());
    tags.push_back("[" + text::lowercase(seg.trait_name) + "]");
  }
  CHECK(tags == std::vector<std::string>{"[sentence fluency]", "[word choice]",
                                         "[conventions]", "[organization]",
                                         "[content]"});
  // Combined text uses the tag format.
  CHECK(text::starts_with(rationale.combined_text(), "[sentence fluency]: "));
}

TEST_CASE("generate: feedback essays end with the conventions segment") {
  EngineSetup setup("gen_feedback", "feedback_traits.json", "feedback_prompts.json");
  auto client = make_synthetic_client(1);
  EssayRecord rec;
  rec.essay_id = "F1";
  rec.prompt_id = 0;
  rec.text = "I think that students would benefit from learning at home.";
  auto rationale = setup.engine.generate(rec, *client, fast_settings());
  REQUIRE(rationale.segments.size() == 6);
  CHECK(rationale.segments.front().trait_name == "Cohesion");
  CHECK(rationale.segments.back().trait_name == "Conventions");
}

TEST_CASE("generate: warm cache serves without network calls") {
  EngineSetup setup("gen_cache");
  auto inner = make_synthetic_client(1);
  CountingClient client(std::move(inner));
  auto first = setup.engine.generate(asap_essay(1), client, fast_settings());
  CHECK(client.calls == 5);

  // Same essay again: all segments cached, zero calls.
  auto second = setup.engine.generate(asap_essay(1), client, fast_settings());
  CHECK(client.calls == 5);
  CHECK(second.combined_text() == first.combined_text());

  // A fully offline client works too when the cache is warm.
  RationaleCache reopened(setup.dir / "rationales.jsonl");
  RationaleEngine engine2(setup.spec, setup.prompt_config.templ, reopened);
  auto offline = make_offline_client(client.generator_id());
  auto third = engine2.generate(asap_essay(1), *offline, fast_settings());
  CHECK(third.combined_text() == first.combined_text());
}

TEST_CASE("generate: provider failure is recorded per trait, never partial") {
  EngineSetup setup("gen_fail");
  CountingClient client(make_synthetic_client(1));
  client.fail_all = true;
  try {
    setup.engine.generate(asap_essay(1), client, fast_settings());
    FAIL("expected GenerationError");
  } catch (const GenerationError& e) {
    CHECK(e.failures().size() == 5);  // every trait failed
  }
  CHECK(setup.cache.size() == 0);

  // Empty completions count as provider failures.
  CountingClient empty_client(make_synthetic_client(1));
  empty_client.empty_completions = true;
  CHECK_THROWS_AS(setup.engine.generate(asap_essay(1), empty_client, fast_settings()),
                  GenerationError);
}

TEST_CASE("compress: shortens, preserves tags, caches separately") {
  EngineSetup setup("compress");
  auto client = make_synthetic_client(1);
  GenerationSettings settings = fast_settings();
  auto rationale = setup.engine.generate(asap_essay(1), *client, settings);
  std::size_t cache_before = setup.cache.size();

  auto compressed = setup.engine.compress(rationale, *client, settings);
  CHECK(compressed.compressed);
  REQUIRE(compressed.segments.size() == rationale.segments.size());
  for (std::size_t i = 0; i < compressed.segments.size(); ++i)
    CHECK(compressed.segments[i].trait_name == rationale.segments[i].trait_name);
  CHECK(text::whitespace_token_count(compressed.combined_text()) <
        text::whitespace_token_count(rationale.combined_text()));
  CHECK(setup.cache.size() == cache_before + rationale.segments.size());

  // Cached compressed rows load through from_cache.
  auto loaded = setup.engine.from_cache(asap_essay(1), client->generator_id(), 0, true);
  REQUIRE(loaded.has_value());
  CHECK(loaded->combined_text() == compressed.combined_text());

  // Guards: double compression and empty rationales.
  CHECK_THROWS_AS(setup.engine.compress(compressed, *client, settings), ValidationError);
  Rationale empty;
  empty.prompt_id = 1;
  CHECK_THROWS_AS(setup.engine.compress(empty, *client, settings), ValidationError);
}

TEST_CASE("combined_text round-trips through parse_combined_rationale") {
  DatasetSpec spec = DatasetSpec::load(testutil::config("asap_traits.json"));
  std::mt19937_64 rng(71);
  const char* words[] = {"clear", "weak", "strong", "flow", "ideas", "support",
                         "uneven", "limited", "varied", "precise"};
  for (int trial = 0; trial < 1000; ++trial) {
    int prompt_id = 1 + static_cast<int>(rng() % 8);
    const PromptSpec& prompt = spec.prompt(prompt_id);
    Rationale rationale;
    rationale.essay_id = "r" + std::to_string(trial);
    rationale.prompt_id = prompt_id;
    // Random subset of traits, in decode order.
    for (const auto& name : prompt.rationale_traits()) {
      if (rng() % 4 == 0 && trial % 3 == 0) continue;
      RationaleSegment seg;
      seg.trait_name = name;
      std::size_t n = 1 + rng() % 12;
      for (std::size_t i = 0; i < n; ++i)
        seg.text += (i ? " " : "") + std::string(words[rng() % 10]);
      rationale.segments.push_back(seg);
    }
    if (rationale.segments.empty()) continue;
    auto parsed = parse_combined_rationale(rationale.combined_text(), prompt);
    REQUIRE(parsed.size() == rationale.segments.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      CHECK(parsed[i].trait_name == rationale.segments[i].trait_name);
      CHECK(parsed[i].text == rationale.segments[i].text);
    }
  }
}

TEST_CASE("segment order equals decode order restricted to available traits") {
  DatasetSpec spec = DatasetSpec::load(testutil::config("asap_traits.json"));
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 200; ++trial) {
    int prompt_id = 1 + static_cast<int>(rng() % 8);
    const PromptSpec& prompt = spec.prompt(prompt_id);
    auto all = prompt.rationale_traits();
    // Build a rationale from a shuffled subset, then restrict-and-reorder.
    std::vector<std::string> subset;
    for (const auto& name : all)
      if (rng() % 2) subset.push_back(name);
    if (subset.empty()) continue;
    std::vector<std::string> shuffled = subset;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng() % i]);

    Rationale rationale;
    rationale.prompt_id = prompt_id;
    for (const auto& name : shuffled) {
      RationaleSegment seg;
      seg.trait_name = name;
      seg.text = "body";
      rationale.segments.push_back(seg);
    }
    // Reorder as the engine would: parse the combined text against the
    // prompt and check the segments come back in decode order after a
    // canonicalizing round trip.
    Rationale ordered;
    ordered.prompt_id = prompt_id;
    for (const auto& name : all) {
      for (const auto& seg : rationale.segments)
        if (seg.trait_name == name) ordered.segments.push_back(seg);
    }
    auto parsed = parse_combined_rationale(ordered.combined_text(), prompt);
    std::vector<std::string> got;
    for (const auto& seg : parsed) got.push_back(seg.trait_name);
    std::vector<std::string> expected;
    for (const auto& name : all)
      if (std::find(subset.begin(), subset.end(), name) != subset.end())
        expected.push_back(name);
    CHECK(got == expected);
  }
}

TEST_CASE("similarity_study: identical iterations give within = 1") {
  EngineSetup setup("sim_within");
  auto client = make_synthetic_client(1);
  GenerationSettings settings = fast_settings();
  settings.temperature = 0.0;  // deterministic: all iterations identical

  std::vector<EssayRecord> sample;
  for (int i = 0; i < 3; ++i) {
    EssayRecord rec = asap_essay(1);
    rec.essay_id = "s" + std::to_string(i);
    rec.text += " Variation " + std::to_string(i) + " of the essay body.";
    sample.push_back(rec);
  }
  auto report = setup.engine.similarity_study(sample, 3, RougeVariant::rouge_l,
                                              *client, settings);
  CHECK(report.within == doctest::Approx(1.0));
  CHECK(report.between < 1.0);
  CHECK(report.n_essays == 3);
  CHECK(report.iterations == 3);
}

TEST_CASE("similarity_study: disjoint bodies separate within from between") {
  // Hand-built rationales through the cache; no generation. Within-essay
  // iterations share most body tokens; between-essay bodies share none
  // (the trait tags are always common, so between stays above zero).
  EngineSetup setup("sim_between");
  DatasetSpec& spec = setup.spec;
  std::vector<EssayRecord> sample;
  const char* body_stub[2] = {"alpha beta gamma", "delta epsilon zeta"};
  for (int e = 0; e < 2; ++e) {
    EssayRecord rec = asap_essay(1);
    rec.essay_id = "d" + std::to_string(e);
    sample.push_back(rec);
    for (int iteration = 0; iteration < 2; ++iteration) {
      for (const auto& name : spec.prompt(1).rationale_traits()) {
        RationaleCache::Row row;
        row.essay_id = rec.essay_id;
        row.prompt_id = 1;
        row.trait = name;
        row.generator_id = "scripted:v0";
        row.iteration = iteration;
        row.text = std::string(body_stub[e]) + " it" + std::to_string(iteration);
        setup.cache.put(row);
      }
    }
  }
  auto offline = make_offline_client("scripted:v0");
  auto report = setup.engine.similarity_study(sample, 2, RougeVariant::rouge_l,
                                              *offline, fast_settings());
  CHECK(report.within > 0.7);
  CHECK(report.between < report.within);

  // Fully disjoint token sequences score zero under the bare metric.
  CHECK(rouge(rouge_tokenize("alpha beta"), rouge_tokenize("delta epsilon"),
              RougeVariant::rouge_l)
            .f1 == 0.0);

  CHECK_THROWS_AS(setup.engine.similarity_study(sample, 1, RougeVariant::rouge_l,
                                                *offline, fast_settings()),
                  ValidationError);
  std::vector<EssayRecord> one = {sample[0]};
  CHECK_THROWS_AS(setup.engine.similarity_study(one, 2, RougeVariant::rouge_l,
                                                *offline, fast_settings()),
                  ValidationError);
}

TEST_CASE("similarity_study: matches a brute-force pairwise oracle") {
  EngineSetup setup("sim_oracle");
  DatasetSpec& spec = setup.spec;
  // 3 essays x 2 iterations with hand-built overlapping bodies.
  const char* bodies[3][2] = {{"the cat sat on the mat", "the cat lay on the mat"},
                              {"dogs run fast in the park", "dogs walk slow in the park"},
                              {"birds sing in the morning", "birds sing at night"}};
  std::vector<EssayRecord> sample;
  for (int e = 0; e < 3; ++e) {
    EssayRecord rec = asap_essay(1);
    rec.essay_id = "o" + std::to_string(e);
    sample.push_back(rec);
    for (int iteration = 0; iteration < 2; ++iteration)
      for (const auto& name : spec.prompt(1).rationale_traits()) {
        RationaleCache::Row row;
        row.essay_id = rec.essay_id;
        row.prompt_id = 1;
        row.trait = name;
        row.generator_id = "scripted:v0";
        row.iteration = iteration;
        row.text = bodies[e][iteration];
        setup.cache.put(row);
      }
  }
  auto offline = make_offline_client("scripted:v0");
  auto report = setup.engine.similarity_study(sample, 2, RougeVariant::rouge_l,
                                              *offline, fast_settings());

  // Brute force over the exact combined texts.
  auto combined = [&](int e, int iteration) {
    auto rationale = setup.engine.from_cache(sample[e], "scripted:v0", iteration, false);
    REQUIRE(rationale.has_value());
    return rouge_tokenize(rationale->combined_text());
  };
  double within = 0.0;
  for (int e = 0; e < 3; ++e)
    within += oracle::rouge_oracle(combined(e, 0), combined(e, 1), 0).f;
  within /= 3.0;
  double between = (oracle::rouge_oracle(combined(0, 0), combined(1, 0), 0).f +
                    oracle::rouge_oracle(combined(0, 0), combined(2, 0), 0).f +
                    oracle::rouge_oracle(combined(1, 0), combined(2, 0), 0).f) /
                   3.0;
  CHECK(report.within == doctest::Approx(within).epsilon(1e-12));
  CHECK(report.between == doctest::Approx(between).epsilon(1e-12));
}

TEST_CASE("length_stats: boundary inclusive, over-limit flagged, empty report") {
  auto make_rationale = [](const std::string& id, std::size_t tokens) {
    Rationale rationale;
    rationale.essay_id = id;
    rationale.prompt_id = 1;
    RationaleSegment seg;
    seg.trait_name = "Content";
    seg.generator_id = "scripted:v0";
    // combined_text() prepends "[content]:" (one token).
    for (std::size_t i = 1; i < tokens; ++i)
      seg.text += (i > 1 ? " " : "") + std::string("w") + std::to_string(i);
    rationale.segments.push_back(seg);
    return rationale;
  };

  auto exactly = make_rationale("at_limit", 512);
  auto over = make_rationale("over_limit", 586);
  REQUIRE(text::whitespace_token_count(exactly.combined_text()) == 512);
  REQUIRE(text::whitespace_token_count(over.combined_text()) == 586);

  auto report = length_stats({exactly, over}, "whitespace", 512);
  REQUIRE(report.count("scripted:v0"));
  const LengthStats& stats = report.at("scripted:v0");
  CHECK(stats.count == 2);
  CHECK(stats.min == 512);
  CHECK(stats.max == 586);
  REQUIRE(stats.over_limit.size() == 1);
  CHECK(stats.over_limit[0].first == "over_limit");
  CHECK(stats.over_limit[0].second == 586);

  CHECK(length_stats({}, "whitespace", 512).empty());
  CHECK_THROWS_AS(length_stats({exactly}, "no_such_tokenizer", 512), ConfigError);
}
