#ifndef RMTS_CHAT_CLIENT_HPP_
#define RMTS_CHAT_CLIENT_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace rmts {

// The paper's decoding settings are the defaults; retry/parallelism knobs
// are request hygiene.
struct GenerationSettings {
  double temperature = 0.0;
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  double top_p = 1.0;
  int max_retries = 3;
  int request_timeout_s = 60;
  int parallelism_limit = 4;
};

struct ChatResult {
  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

// One system+user exchange; no conversation state between calls.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Provider+model label, e.g. "openai:gpt-3.5-turbo-0125".
  virtual std::string generator_id() const = 0;
  // Throws rmts::Error on provider failure (after the caller's retries).
  virtual ChatResult complete(const std::string& system_message,
                              const std::string& user_message,
                              const GenerationSettings& settings) = 0;
};

// OpenAI-style chat-completions endpoint. The API key is read from an
// environment variable; endpoint/model come from configuration.
struct HttpClientConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo-0125";
  std::string api_key_env = "OPENAI_API_KEY";
};
std::unique_ptr<ChatClient> make_http_client(const HttpClientConfig& config);

// Replays recorded completions from a JSONL fixture keyed by the rendered
// prompt's content hash. Misses are errors (strictly offline).
std::unique_ptr<ChatClient> make_replay_client(const std::filesystem::path& fixture,
                                               const std::string& generator_id);

// Deterministic offline generator: produces plausible trait-tagged prose
// from a hash of (essay text, trait, iteration). Never quotes essay text.
std::unique_ptr<ChatClient> make_synthetic_client(std::uint64_t seed = 0);

// Always fails; stands in for an unreachable provider in cache-only runs.
std::unique_ptr<ChatClient> make_offline_client(const std::string& generator_id);

}  // namespace rmts

#endif  // RMTS_CHAT_CLIENT_HPP_
