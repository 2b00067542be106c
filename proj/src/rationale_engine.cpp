#include "rmts/rationale_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <future>
#include <thread>

#include <json.hpp>

#include "rmts/errors.hpp"
#include "rmts/jsonl.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace rmts {

// RationaleCache ----------------------------------------------------------------

RationaleCache::RationaleCache(std::filesystem::path file) : file_(std::move(file)) {
  if (!std::filesystem::exists(file_)) return;
  jsonl::for_each(file_, [&](std::size_t, const json& obj) {
    Row row;
    row.essay_id = obj.at("essay_id").get<std::string>();
    row.prompt_id = obj.value("prompt_id", 0);
    row.trait = obj.at("trait").get<std::string>();
    row.generator_id = obj.at("generator_id").get<std::string>();
    row.iteration = obj.value("iteration", 0);
    row.compressed = obj.value("compressed", false);
    row.content_hash = obj.value("content_hash", "");
    row.text = obj.at("text").get<std::string>();
    row.timestamp = obj.value("timestamp", "");
    Key key{row.essay_id, row.trait, row.generator_id, row.iteration, row.compressed};
    index_[key] = std::move(row);  // later rows win
  });
}

std::optional<RationaleCache::Row> RationaleCache::find(
    const std::string& essay_id, const std::string& trait,
    const std::string& generator_id, int iteration, bool compressed,
    const std::string& expected_hash) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = index_.find(Key{essay_id, trait, generator_id, iteration, compressed});
  if (it == index_.end()) return std::nullopt;
  if (!expected_hash.empty() && it->second.content_hash != expected_hash)
    return std::nullopt;
  return it->second;
}

void RationaleCache::put(Row row) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (row.timestamp.empty()) {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    row.timestamp = buf;
  }
  json obj = {{"essay_id", row.essay_id},     {"prompt_id", row.prompt_id},
              {"trait", row.trait},           {"generator_id", row.generator_id},
              {"iteration", row.iteration},   {"compressed", row.compressed},
              {"content_hash", row.content_hash}, {"text", row.text},
              {"timestamp", row.timestamp}};
  jsonl::append(file_, obj);
  Key key{row.essay_id, row.trait, row.generator_id, row.iteration, row.compressed};
  index_[key] = std::move(row);
}

std::size_t RationaleCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return index_.size();
}

// RationaleEngine ----------------------------------------------------------------

RationaleEngine::RationaleEngine(const DatasetSpec& dataset, const TemplateSpec& templ,
                                 RationaleCache& cache, PromptVariant variant)
    : dataset_(dataset), templ_(templ), cache_(cache), variant_(variant) {}

std::string RationaleEngine::generate_segment(const EssayRecord& record,
                                              const TraitSpec& trait,
                                              const PromptSpec& prompt,
                                              ChatClient& client,
                                              const GenerationSettings& settings,
                                              int iteration) {
  RenderedPrompt rendered =
      render_trait_prompt(record, trait, prompt, templ_, variant_);
  if (auto hit = cache_.find(record.essay_id, trait.name, client.generator_id(),
                             iteration, false, rendered.content_hash))
    return hit->text;

  std::string last_error;
  int attempts = std::max(1, settings.max_retries);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(100LL * (1LL << (attempt - 1))));
    try {
      ChatResult result =
          client.complete(rendered.system_message, rendered.user_message, settings);
      if (text::trim(result.text).empty()) {
        last_error = "empty completion";
        continue;
      }
      RationaleCache::Row row;
      row.essay_id = record.essay_id;
      row.prompt_id = record.prompt_id;
      row.trait = trait.name;
      row.generator_id = client.generator_id();
      row.iteration = iteration;
      row.compressed = false;
      row.content_hash = rendered.content_hash;
      row.text = text::trim(result.text);
      std::string out = row.text;
      cache_.put(std::move(row));
      return out;
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw Error(last_error.empty() ? "provider failure" : last_error);
}

Rationale RationaleEngine::generate(const EssayRecord& record, ChatClient& client,
                                    const GenerationSettings& settings,
                                    int iteration) {
  const PromptSpec& prompt = dataset_.prompt(record.prompt_id);
  std::vector<std::string> traits = prompt.rationale_traits();
  if (traits.empty())
    throw ConfigError("prompt " + std::to_string(record.prompt_id) +
                      " has no rationale-eligible traits");

  std::vector<std::string> texts(traits.size());
  std::vector<std::pair<std::string, std::string>> failures;
  std::mutex failures_mutex;

  // Separate agent per trait; bounded concurrency.
  std::size_t limit = std::max(1, settings.parallelism_limit);
  for (std::size_t start = 0; start < traits.size(); start += limit) {
    std::size_t end = std::min(traits.size(), start + limit);
    std::vector<std::future<void>> batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [&, i] {
        try {
          texts[i] = generate_segment(record, prompt.trait(traits[i]), prompt, client,
                                      settings, iteration);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(failures_mutex);
          failures.emplace_back(traits[i], e.what());
        }
      }));
    }
    for (auto& f : batch) f.get();
  }

  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end());
    std::string msg = "rationale generation incomplete for essay " + record.essay_id + ":";
    for (const auto& [trait, err] : failures) msg += " [" + trait + "] " + err + ";";
    throw GenerationError(msg, failures);
  }

  Rationale rationale;
  rationale.essay_id = record.essay_id;
  rationale.prompt_id = record.prompt_id;
  for (std::size_t i = 0; i < traits.size(); ++i) {
    RationaleSegment seg;
    seg.trait_name = traits[i];
    seg.text = texts[i];
    seg.generator_id = client.generator_id();
    seg.iteration = iteration;
    rationale.segments.push_back(std::move(seg));
  }
  return rationale;
}

Rationale RationaleEngine::compress(const Rationale& rationale, ChatClient& client,
                                    const GenerationSettings& settings) {
  if (rationale.segments.empty())
    throw ValidationError("cannot compress an empty rationale");
  if (rationale.compressed)
    throw ValidationError("rationale for essay " + rationale.essay_id +
                          " is already compressed");
  const PromptSpec& prompt = dataset_.prompt(rationale.prompt_id);
  for (const auto& name : prompt.rationale_traits()) {
    bool found = false;
    for (const auto& seg : rationale.segments) found |= seg.trait_name == name;
    if (!found)
      throw ValidationError("rationale for essay " + rationale.essay_id +
                            " is incomplete (missing trait '" + name + "')");
  }

  RenderedPrompt rendered = render_compression_prompt(rationale, templ_);
  int iteration = rationale.segments.front().iteration;

  // Cache hit: all segments already compressed under this prompt hash.
  {
    Rationale cached;
    cached.essay_id = rationale.essay_id;
    cached.prompt_id = rationale.prompt_id;
    cached.compressed = true;
    bool complete = true;
    for (const auto& seg : rationale.segments) {
      auto hit = cache_.find(rationale.essay_id, seg.trait_name, client.generator_id(),
                             iteration, true, rendered.content_hash);
      if (!hit) {
        complete = false;
        break;
      }
      RationaleSegment out = seg;
      out.text = hit->text;
      out.generator_id = client.generator_id();
      cached.segments.push_back(std::move(out));
    }
    if (complete) return cached;
  }

  std::string last_error;
  std::string completion;
  int attempts = std::max(1, settings.max_retries);
  for (int attempt = 0; attempt < attempts && completion.empty(); ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(100LL * (1LL << (attempt - 1))));
    try {
      ChatResult result =
          client.complete(rendered.system_message, rendered.user_message, settings);
      completion = text::trim(result.text);
      if (completion.empty()) last_error = "empty completion";
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  if (completion.empty())
    throw GenerationError("compression failed for essay " + rationale.essay_id + ": " +
                              last_error,
                          {{"*", last_error}});

  std::vector<RationaleSegment> parsed = parse_combined_rationale(completion, prompt);
  std::vector<std::string> want, got;
  for (const auto& seg : rationale.segments) want.push_back(seg.trait_name);
  for (const auto& seg : parsed) got.push_back(seg.trait_name);
  if (want != got)
    throw GenerationError("compression lost or reordered trait tags for essay " +
                              rationale.essay_id,
                          {{"*", "tag mismatch"}});

  Rationale out;
  out.essay_id = rationale.essay_id;
  out.prompt_id = rationale.prompt_id;
  out.compressed = true;
  for (auto& seg : parsed) {
    if (seg.text.empty())
      throw GenerationError("compression emptied the '" + seg.trait_name +
                                "' segment for essay " + rationale.essay_id,
                            {{seg.trait_name, "empty segment"}});
    seg.generator_id = client.generator_id();
    seg.iteration = iteration;
    RationaleCache::Row row;
    row.essay_id = out.essay_id;
    row.prompt_id = out.prompt_id;
    row.trait = seg.trait_name;
    row.generator_id = client.generator_id();
    row.iteration = iteration;
    row.compressed = true;
    row.content_hash = rendered.content_hash;
    row.text = seg.text;
    cache_.put(std::move(row));
    out.segments.push_back(std::move(seg));
  }
  return out;
}

std::optional<Rationale> RationaleEngine::from_cache(const EssayRecord& record,
                                                     const std::string& generator_id,
                                                     int iteration,
                                                     bool compressed) const {
  const PromptSpec& prompt = dataset_.prompt(record.prompt_id);
  Rationale rationale;
  rationale.essay_id = record.essay_id;
  rationale.prompt_id = record.prompt_id;
  rationale.compressed = compressed;
  for (const auto& name : prompt.rationale_traits()) {
    auto hit = cache_.find(record.essay_id, name, generator_id, iteration, compressed);
    if (!hit) return std::nullopt;
    RationaleSegment seg;
    seg.trait_name = name;
    seg.text = hit->text;
    seg.generator_id = generator_id;
    seg.iteration = iteration;
    rationale.segments.push_back(std::move(seg));
  }
  return rationale;
}

SimilarityReport RationaleEngine::similarity_study(
    const std::vector<EssayRecord>& sample, int iterations, RougeVariant variant,
    ChatClient& client, const GenerationSettings& settings) {
  if (iterations < 2)
    throw ValidationError("similarity study needs at least 2 iterations");
  if (sample.size() < 2)
    throw ValidationError("similarity study needs at least 2 essays");

  // Rationale token lists per essay, per iteration.
  std::vector<std::vector<std::vector<std::string>>> tokens(sample.size());
  for (std::size_t e = 0; e < sample.size(); ++e) {
    for (int it = 0; it < iterations; ++it) {
      auto cached = from_cache(sample[e], client.generator_id(), it, false);
      Rationale rationale =
          cached ? *cached : generate(sample[e], client, settings, it);
      tokens[e].push_back(rouge_tokenize(rationale.combined_text()));
    }
  }

  double within_sum = 0.0;
  for (std::size_t e = 0; e < sample.size(); ++e) {
    double pair_sum = 0.0;
    std::size_t pairs = 0;
    for (int a = 0; a < iterations; ++a)
      for (int b = a + 1; b < iterations; ++b) {
        pair_sum += rouge(tokens[e][a], tokens[e][b], variant).f1;
        ++pairs;
      }
    within_sum += pair_sum / static_cast<double>(pairs);
  }

  double between_sum = 0.0;
  std::size_t between_pairs = 0;
  for (std::size_t a = 0; a < sample.size(); ++a)
    for (std::size_t b = a + 1; b < sample.size(); ++b) {
      between_sum += rouge(tokens[a][0], tokens[b][0], variant).f1;
      ++between_pairs;
    }

  SimilarityReport report;
  report.generator_id = client.generator_id();
  report.variant = variant;
  report.iterations = iterations;
  report.n_essays = sample.size();
  report.within = within_sum / static_cast<double>(sample.size());
  report.between = between_sum / static_cast<double>(between_pairs);
  return report;
}

// length_stats --------------------------------------------------------------------

namespace {

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  double idx = p * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(idx);
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = idx - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

LengthReport length_stats(const std::vector<Rationale>& rationales,
                          const std::string& tokenizer_id, std::size_t limit) {
  if (!text::has_token_counter(tokenizer_id))
    throw ConfigError("unknown tokenizer id: " + tokenizer_id);

  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> by_generator;
  for (const auto& rationale : rationales) {
    std::string generator =
        rationale.segments.empty() ? "unknown" : rationale.segments.front().generator_id;
    std::size_t n = text::count_tokens(tokenizer_id, rationale.combined_text());
    by_generator[generator].emplace_back(rationale.essay_id, n);
  }

  LengthReport report;
  for (const auto& [generator, entries] : by_generator) {
    LengthStats stats;
    stats.count = entries.size();
    std::vector<double> counts;
    double sum = 0.0;
    for (const auto& [essay_id, n] : entries) {
      counts.push_back(static_cast<double>(n));
      sum += static_cast<double>(n);
      if (n > limit) stats.over_limit.emplace_back(essay_id, n);
    }
    std::sort(counts.begin(), counts.end());
    stats.min = counts.front();
    stats.max = counts.back();
    stats.mean = sum / static_cast<double>(counts.size());
    stats.p25 = quantile(counts, 0.25);
    stats.p50 = quantile(counts, 0.50);
    stats.p75 = quantile(counts, 0.75);
    stats.p95 = quantile(counts, 0.95);
    report[generator] = std::move(stats);
  }
  return report;
}

}  // namespace rmts
