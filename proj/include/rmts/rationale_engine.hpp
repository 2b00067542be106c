#ifndef RMTS_RATIONALE_ENGINE_HPP_
#define RMTS_RATIONALE_ENGINE_HPP_

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "rmts/chat_client.hpp"
#include "rmts/corpus.hpp"
#include "rmts/metrics.hpp"
#include "rmts/prompt_forge.hpp"
#include "rmts/rationale.hpp"

namespace rmts {

// Append-only line-delimited rationale store. Later rows for the same key
// win; writes are serialized, reads are lock-guarded map lookups.
class RationaleCache {
 public:
  // key: (essay_id, trait, generator_id, iteration, compressed)
  using Key = std::tuple<std::string, std::string, std::string, int, bool>;

  struct Row {
    std::string essay_id;
    int prompt_id = 0;
    std::string trait;
    std::string generator_id;
    int iteration = 0;
    bool compressed = false;
    std::string content_hash;
    std::string text;
    std::string timestamp;
  };

  // Opens (and indexes) the cache file; the file may not exist yet.
  explicit RationaleCache(std::filesystem::path file);

  // expected_hash empty = accept any generation of this key.
  std::optional<Row> find(const std::string& essay_id, const std::string& trait,
                          const std::string& generator_id, int iteration,
                          bool compressed,
                          const std::string& expected_hash = "") const;
  void put(Row row);
  std::size_t size() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::map<Key, Row> index_;
};

struct SimilarityReport {
  std::string generator_id;
  RougeVariant variant = RougeVariant::rouge_l;
  int iterations = 0;
  std::size_t n_essays = 0;
  double within = 0.0;   // mean over essays of mean pairwise ROUGE across iterations
  double between = 0.0;  // mean pairwise ROUGE between iteration-0 rationales
};

struct LengthStats {
  std::size_t count = 0;
  double min = 0.0, mean = 0.0, max = 0.0;
  double p25 = 0.0, p50 = 0.0, p75 = 0.0, p95 = 0.0;
  std::vector<std::pair<std::string, std::size_t>> over_limit;  // (essay_id, tokens)
};
// keyed by generator_id
using LengthReport = std::map<std::string, LengthStats>;

// Drives one LLM agent per trait, in decode order, caching every segment.
class RationaleEngine {
 public:
  RationaleEngine(const DatasetSpec& dataset, const TemplateSpec& templ,
                  RationaleCache& cache,
                  PromptVariant variant = PromptVariant::excerpt_free);

  // One independent chat call per non-holistic trait. Cached segments are
  // served without network calls. Any per-trait failure aborts the whole
  // essay with a GenerationError listing (trait, message) pairs.
  Rationale generate(const EssayRecord& record, ChatClient& client,
                     const GenerationSettings& settings, int iteration = 0);

  // Single-call compression of a complete rationale; tags must survive.
  Rationale compress(const Rationale& rationale, ChatClient& client,
                     const GenerationSettings& settings);

  // Cache-only lookup; nullopt when any trait row is missing.
  std::optional<Rationale> from_cache(const EssayRecord& record,
                                      const std::string& generator_id, int iteration,
                                      bool compressed) const;

  // Within/between ROUGE over a sample (generates or reads rationales for
  // `iterations` iterations per essay).
  SimilarityReport similarity_study(const std::vector<EssayRecord>& sample,
                                    int iterations, RougeVariant variant,
                                    ChatClient& client,
                                    const GenerationSettings& settings);

  const DatasetSpec& dataset() const { return dataset_; }

 private:
  std::string generate_segment(const EssayRecord& record, const TraitSpec& trait,
                               const PromptSpec& prompt, ChatClient& client,
                               const GenerationSettings& settings, int iteration);

  const DatasetSpec& dataset_;
  TemplateSpec templ_;
  RationaleCache& cache_;
  PromptVariant variant_;
};

// Token-count distribution per generator; rationales above `limit` tokens
// are flagged for truncation (the boundary itself is not flagged).
LengthReport length_stats(const std::vector<Rationale>& rationales,
                          const std::string& tokenizer_id, std::size_t limit = 512);

}  // namespace rmts

#endif  // RMTS_RATIONALE_ENGINE_HPP_
