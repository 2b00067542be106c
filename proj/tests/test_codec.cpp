#include <doctest.h>

#include <random>

#include "rmts/errors.hpp"
#include "rmts/sequence_codec.hpp"
#include "rmts/text.hpp"
#include "test_support.hpp"

using namespace rmts;

namespace {

EssayRecord sample_record(int prompt_id = 1) {
  EssayRecord rec;
  rec.essay_id = "e1";
  rec.prompt_id = prompt_id;
  rec.text = "Dear @CAPS1, computers help people learn and talk with friends online.";
  rec.gold_scores = {{"Fluency", 3}, {"Content", 4}, {"Overall", 8}};
  return rec;
}

Rationale sample_rationale(const DatasetSpec& spec, const EssayRecord& rec,
                           int n_words_per_segment = 8) {
  Rationale rationale;
  rationale.essay_id = rec.essay_id;
  rationale.prompt_id = rec.prompt_id;
  for (const auto& name : spec.prompt(rec.prompt_id).rationale_traits()) {
    RationaleSegment seg;
    seg.trait_name = name;
    seg.text = "The " + text::lowercase(name) + " is";
    for (int i = 3; i < n_words_per_segment; ++i) seg.text += " word" + std::to_string(i);
    seg.generator_id = "synthetic:v1";
    rationale.segments.push_back(seg);
  }
  return rationale;
}

}  // namespace

TEST_CASE("assemble_input: essay_only prefix, marker, and verbatim essay") {
  DatasetSpec spec = testutil::tiny_spec(3);
  EssayRecord rec = sample_record(3);
  auto input = assemble_input(rec, nullptr, InputMode::essay_only, spec.prompt(3), 512);
  CHECK(text::starts_with(input.text, "Score the essay of the prompt 3"));
  CHECK(input.text.find("<Essay>") != std::string::npos);
  CHECK(input.text.find(rec.text) != std::string::npos);
  CHECK(input.text.find("<Rationale>") == std::string::npos);
  CHECK_FALSE(input.truncated);
  CHECK(input.essay_id == "e1");
}

TEST_CASE("assemble_input: rationale_only carries no essay body") {
  DatasetSpec spec = testutil::tiny_spec();
  EssayRecord rec = sample_record();
  Rationale rationale = sample_rationale(spec, rec);
  auto input =
      assemble_input(rec, &rationale, InputMode::rationale_only, spec.prompt(1), 512);
  CHECK(input.text.find("<Rationale>") != std::string::npos);
  CHECK(input.text.find("<Essay>") == std::string::npos);
  // No 20-character substring of the essay text may appear.
  for (std::size_t start = 0; start + 20 <= rec.text.size(); ++start)
    CHECK(input.text.find(rec.text.substr(start, 20)) == std::string::npos);
}

TEST_CASE("assemble_input: essay_plus_rationale has both markers in order") {
  DatasetSpec spec = testutil::tiny_spec();
  EssayRecord rec = sample_record();
  Rationale rationale = sample_rationale(spec, rec);
  auto input = assemble_input(rec, &rationale, InputMode::essay_plus_rationale,
                              spec.prompt(1), 512);
  auto essay_pos = input.text.find("<Essay>");
  auto rationale_pos = input.text.find("<Rationale>");
  CHECK(essay_pos != std::string::npos);
  CHECK(rationale_pos != std::string::npos);
  CHECK(essay_pos < rationale_pos);
  CHECK(input.text.find(rationale.combined_text()) != std::string::npos);
}

TEST_CASE("assemble_input: missing rationale for rationale modes is an error") {
  DatasetSpec spec = testutil::tiny_spec();
  EssayRecord rec = sample_record();
  CHECK_THROWS_AS(
      assemble_input(rec, nullptr, InputMode::essay_plus_rationale, spec.prompt(1), 512),
      ValidationError);
  CHECK_THROWS_AS(
      assemble_input(rec, nullptr, InputMode::rationale_only, spec.prompt(1), 512),
      ValidationError);
}

TEST_CASE("assemble_input: truncation trims the rationale tail first") {
  DatasetSpec spec = testutil::tiny_spec();
  EssayRecord rec = sample_record();
  rec.text = "one two three four five six seven eight nine ten";
  // 586-token rationale against a 512-token budget.
  Rationale rationale = sample_rationale(spec, rec, 292);
  CHECK(text::whitespace_token_count(rationale.combined_text()) == 586);

  auto input = assemble_input(rec, &rationale, InputMode::essay_plus_rationale,
                              spec.prompt(1), 512);
  CHECK(input.truncated);
  CHECK(text::whitespace_token_count(input.text) <= 512);
  // The essay survives intact; only the rationale lost tokens.
  CHECK(input.text.find(rec.text) != std::string::npos);
  CHECK(text::starts_with(input.text, "Score the essay of the prompt 1"));

  // Tight budgets cut into the essay tail but never the prefix/markers.
  auto tight = assemble_input(rec, &rationale, InputMode::essay_plus_rationale,
                              spec.prompt(1), 12);
  CHECK(text::whitespace_token_count(tight.text) <= 12);
  CHECK(text::starts_with(tight.text, "Score the essay of the prompt 1"));
  CHECK(tight.text.find("<Essay>") != std::string::npos);
  CHECK(tight.text.find("<Rationale>") != std::string::npos);

  CHECK_THROWS_AS(assemble_input(rec, &rationale, InputMode::essay_plus_rationale,
                                 spec.prompt(1), 8),
                  ValidationError);
}

TEST_CASE("assemble_input: token count never exceeds the limit (random)") {
  DatasetSpec spec = testutil::tiny_spec();
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    EssayRecord rec = sample_record();
    rec.text = "";
    std::size_t essay_words = 1 + rng() % 120;
    for (std::size_t i = 0; i < essay_words; ++i)
      rec.text += (i ? " " : "") + std::string("w") + std::to_string(rng() % 50);
    Rationale rationale = sample_rationale(spec, rec, 4 + static_cast<int>(rng() % 80));
    int limit = 10 + static_cast<int>(rng() % 200);
    InputMode mode = trial % 3 == 0   ? InputMode::essay_only
                     : trial % 3 == 1 ? InputMode::essay_plus_rationale
                                      : InputMode::rationale_only;
    auto input = assemble_input(rec, &rationale, mode, spec.prompt(1), limit);
    CHECK(text::whitespace_token_count(input.text) <= static_cast<std::size_t>(limit));
    CHECK(text::starts_with(input.text, "Score the essay of the prompt 1"));
  }
}

TEST_CASE("encode_targets: canonical format and decode order") {
  DatasetSpec spec = testutil::tiny_spec();
  std::map<std::string, double> gold = {{"Content", 4}, {"Overall", 8}};
  CHECK(encode_targets(gold, spec.prompt(1)) == "<Content> 4 <Overall> 8");
  CHECK(encode_targets({}, spec.prompt(1)).empty());

  gold = {{"Overall", 8}, {"Fluency", 3}, {"Content", 4}};
  CHECK(encode_targets(gold, spec.prompt(1)) == "<Fluency> 3 <Content> 4 <Overall> 8");
}

TEST_CASE("encode_targets: asap prompt 7 order matches the configured decode order") {
  DatasetSpec spec = DatasetSpec::load(testutil::config("asap_traits.json"));
  const PromptSpec& p7 = spec.prompt(7);
  std::vector<std::string> expected_order = {"Style", "Conventions", "Organization",
                                             "Content", "Overall"};
  CHECK(p7.decode_order == expected_order);
  std::map<std::string, double> gold = {{"Overall", 20}, {"Content", 4},
                                        {"Organization", 3}, {"Conventions", 5},
                                        {"Style", 2}};
  CHECK(encode_targets(gold, p7) ==
        "<Style> 2 <Conventions> 5 <Organization> 3 <Content> 4 <Overall> 20");
}

TEST_CASE("encode_targets: errors for undeclared traits and off-grid scores") {
  DatasetSpec spec = testutil::tiny_spec();
  CHECK_THROWS_AS(encode_targets({{"Narrativity", 2}}, spec.prompt(1)), ConfigError);
  CHECK_THROWS_AS(encode_targets({{"Content", 3.3}}, spec.prompt(1)), ValidationError);
  CHECK_THROWS_AS(encode_targets({{"Content", 99}}, spec.prompt(1)), ValidationError);
}

TEST_CASE("parse_scores: round-trips encode_targets output") {
  DatasetSpec spec = testutil::tiny_spec();
  std::map<std::string, double> gold = {{"Fluency", 2}, {"Content", 6}, {"Overall", 11}};
  auto parsed = parse_scores(encode_targets(gold, spec.prompt(1)), spec.prompt(1));
  CHECK(parsed.parsed == gold);
  CHECK(parsed.unparsed_traits.empty());
  CHECK(parsed.clamped_traits.empty());
  CHECK(parsed.duplicate_traits.empty());
}

TEST_CASE("parse_scores: first occurrence wins and duplicates are flagged") {
  DatasetSpec spec = testutil::tiny_spec();
  auto parsed = parse_scores("<Content> 4 garbage <Content> 6", spec.prompt(1));
  CHECK(parsed.parsed.at("Content") == 4);
  CHECK(parsed.duplicate_traits == std::vector<std::string>{"Content"});
}

TEST_CASE("parse_scores: clamps off-grid values and flags them") {
  DatasetSpec spec = testutil::tiny_spec();
  auto parsed = parse_scores("<Content> 99", spec.prompt(1));
  CHECK(parsed.parsed.at("Content") == 6);
  CHECK(parsed.clamped_traits == std::vector<std::string>{"Content"});

  auto low = parse_scores("<Content> -3", spec.prompt(1));
  CHECK(low.parsed.at("Content") == 1);

  auto frac = parse_scores("<Content> 3.4", spec.prompt(1));
  CHECK(frac.parsed.at("Content") == 3);
  CHECK(frac.clamped_traits == std::vector<std::string>{"Content"});
}

TEST_CASE("parse_scores: missing traits are reported, separators tolerated") {
  DatasetSpec spec = testutil::tiny_spec();
  auto parsed = parse_scores("<Content>: 4", spec.prompt(1));
  CHECK(parsed.parsed.at("Content") == 4);
  CHECK(parsed.unparsed_traits == std::vector<std::string>{"Fluency", "Overall"});

  // A token with no number after it stays unparsed.
  auto bare = parse_scores("<Fluency> none <Content> x", spec.prompt(1));
  CHECK(bare.parsed.empty());
  CHECK(bare.unparsed_traits.size() == 3);
}

TEST_CASE("parse_scores: round-trip property on random maps, both dataset families") {
  std::mt19937_64 rng(43);
  for (const char* config : {"asap_traits.json", "feedback_traits.json"}) {
    DatasetSpec spec = DatasetSpec::load(testutil::config(config));
    for (int trial = 0; trial < 500; ++trial) {
      // Random prompt, random subset of traits, random grid values.
      auto it = spec.prompts.begin();
      std::advance(it, rng() % spec.prompts.size());
      const PromptSpec& prompt = it->second;
      std::map<std::string, double> gold;
      for (const auto& trait : prompt.traits) {
        if (rng() % 2) continue;
        int k = trait.grid_points();
        gold[trait.name] =
            trait.score_min + trait.score_step * static_cast<double>(rng() % k);
      }
      auto parsed = parse_scores(encode_targets(gold, prompt), prompt);
      CHECK(parsed.parsed == gold);
      CHECK(parsed.unparsed_traits.size() == prompt.traits.size() - gold.size());
      CHECK(parsed.clamped_traits.empty());
    }
  }
}

TEST_CASE("parse_scores: agrees with the reference scanner on adversarial strings") {
  DatasetSpec spec = DatasetSpec::load(testutil::config("asap_traits.json"));
  std::mt19937_64 rng(47);
  const char* pieces[] = {"<Content>",  "<Overall>", "<Word_Choice>", "<Voice>",
                          "4",          "99",        "3.5",           "-2",
                          ":",          "=",         "garbage",       " ",
                          "<Content",   "Voice>",    "7.",            ".5",
                          "<Organization>", "\n",    "\t",            "<Style>"};
  for (int trial = 0; trial < 400; ++trial) {
    const PromptSpec& prompt = spec.prompt(1 + static_cast<int>(rng() % 8));
    std::string raw;
    std::size_t n = rng() % 20;
    for (std::size_t i = 0; i < n; ++i) {
      raw += pieces[rng() % (sizeof(pieces) / sizeof(pieces[0]))];
      if (rng() % 2) raw += " ";
    }
    auto got = parse_scores(raw, prompt);
    auto expected = oracle::scan_scores_reference(raw, prompt);
    CHECK(got.parsed == expected);
  }
}

TEST_CASE("parse_scores: total over fuzzed byte strings") {
  DatasetSpec spec = testutil::tiny_spec();
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string raw;
    std::size_t n = rng() % 64;
    for (std::size_t i = 0; i < n; ++i)
      raw += static_cast<char>(rng() % 256);
    CHECK_NOTHROW(parse_scores(raw, spec.prompt(1)));
  }
}

TEST_CASE("evaluable_pairs: NaN gold excluded, fallback for unparsed") {
  DatasetSpec spec = testutil::tiny_spec();
  const PromptSpec& prompt = spec.prompt(1);

  // Gold lacks Fluency (NaN): no pair even though it was predicted.
  auto parsed = parse_scores("<Fluency> 3 <Content> 4", prompt);
  std::map<std::string, double> gold = {{"Content", 5}, {"Overall", 8}};
  auto pairs = evaluable_pairs(parsed, gold, prompt);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].trait == "Content");
  CHECK(pairs[0].gold == 5);
  CHECK(pairs[0].pred == 4);
  CHECK_FALSE(pairs[0].fallback);
  // Overall was never predicted: midpoint fallback, flagged.
  CHECK(pairs[1].trait == "Overall");
  CHECK(pairs[1].fallback);
  CHECK(pairs[1].pred == prompt.trait("Overall").grid_midpoint());

  // All parsed, all gold present: one pair per trait.
  std::map<std::string, double> full = {{"Fluency", 3}, {"Content", 4}, {"Overall", 8}};
  auto all = evaluable_pairs(parse_scores(encode_targets(full, prompt), prompt), full, prompt);
  CHECK(all.size() == 3);
  for (const auto& pair : all) CHECK_FALSE(pair.fallback);
}

TEST_CASE("special token set: manifest round-trip and stable version") {
  DatasetSpec spec = DatasetSpec::load(testutil::config("asap_traits.json"));
  auto tokens = SpecialTokenSet::for_dataset(spec);
  CHECK(tokens.markers.size() == 13);  // <Essay>, <Rationale>, 11 traits
  CHECK(std::find(tokens.markers.begin(), tokens.markers.end(), "<Word_Choice>") !=
        tokens.markers.end());

  auto dir = testutil::scratch_dir("manifest");
  tokens.write_manifest(dir / "tokens.json");
  auto reread = SpecialTokenSet::read_manifest(dir / "tokens.json");
  CHECK(reread.markers == tokens.markers);
  CHECK(reread.version() == tokens.version());
}
