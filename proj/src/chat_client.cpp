#include "rmts/chat_client.hpp"

#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <vector>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include "rmts/errors.hpp"
#include "rmts/jsonl.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace rmts {

namespace {

std::string message_hash(const std::string& system, const std::string& user) {
  return text::hex64(text::fnv1a64(system + "\x1f" + user));
}

// http ------------------------------------------------------------------------

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig config) : config_(std::move(config)) {}

  std::string generator_id() const override { return "openai:" + config_.model; }

  ChatResult complete(const std::string& system_message,
                      const std::string& user_message,
                      const GenerationSettings& settings) override {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key)
      throw ConfigError("environment variable " + config_.api_key_env +
                        " is not set; cannot reach the chat provider");

    json body = {
        {"model", config_.model},
        {"messages",
         {{{"role", "system"}, {"content", system_message}},
          {{"role", "user"}, {"content", user_message}}}},
        {"temperature", settings.temperature},
        {"top_p", settings.top_p},
        {"frequency_penalty", settings.frequency_penalty},
        {"presence_penalty", settings.presence_penalty},
    };

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(settings.request_timeout_s, 0);
    client.set_read_timeout(settings.request_timeout_s, 0);
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res)
      throw Error("chat request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error("chat request returned HTTP " + std::to_string(res->status) +
                  ": " + res->body.substr(0, 500));

    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty())
      throw Error("unparseable chat response");
    ChatResult out;
    out.text = reply["choices"][0].value("message", json::object())
                   .value("content", std::string());
    if (reply.contains("usage")) {
      out.prompt_tokens = reply["usage"].value("prompt_tokens", 0L);
      out.completion_tokens = reply["usage"].value("completion_tokens", 0L);
    }
    return out;
  }

 private:
  HttpClientConfig config_;
};

// replay ------------------------------------------------------------------------

class ReplayChatClient : public ChatClient {
 public:
  ReplayChatClient(const std::filesystem::path& fixture, std::string generator_id)
      : generator_id_(std::move(generator_id)) {
    jsonl::for_each(fixture, [&](std::size_t, const json& obj) {
      responses_[obj.at("content_hash").get<std::string>()] =
          obj.at("text").get<std::string>();
    });
  }

  std::string generator_id() const override { return generator_id_; }

  ChatResult complete(const std::string& system_message,
                      const std::string& user_message,
                      const GenerationSettings&) override {
    auto it = responses_.find(message_hash(system_message, user_message));
    if (it == responses_.end())
      throw Error("replay fixture has no recorded completion for this prompt");
    return {it->second, 0, 0};
  }

 private:
  std::string generator_id_;
  std::map<std::string, std::string> responses_;
};

// synthetic ----------------------------------------------------------------------

// Word pools for deterministic rationale prose.
const char* const kQualities[] = {"clarity", "focus",    "coherence", "variety",
                                  "control", "precision", "depth",     "balance"};
const char* const kJudgements[] = {
    "is handled unevenly across the piece", "remains consistent throughout",
    "weakens in the middle paragraphs",     "supports the writer's purpose",
    "shows limited development",            "is adequate but unremarkable",
    "stands out as a clear strength",       "needs substantial revision"};
const char* const kOpeners[] = {"The essay demonstrates", "The writing shows",
                                "The response exhibits", "The piece reflects"};
const char* const kAdjectives[] = {"limited", "adequate", "strong", "inconsistent",
                                   "developing", "basic", "effective", "modest"};

class SyntheticChatClient : public ChatClient {
 public:
  explicit SyntheticChatClient(std::uint64_t seed) : seed_(seed) {}

  std::string generator_id() const override { return "synthetic:v1"; }

  ChatResult complete(const std::string& system_message,
                      const std::string& user_message,
                      const GenerationSettings& settings) override {
    (void)system_message;
    if (user_message.find("retaining key details") != std::string::npos)
      return {compress(extract_section(user_message, "Rationale")), 0, 0};

    std::string trait = extract_quoted_trait(user_message);
    std::string essay = extract_section(user_message, "Essay");
    std::uint64_t base = text::fnv1a64(essay, seed_);
    base = text::fnv1a64(trait, base);
    // Sampling providers vary across calls; at temperature 0 the output is
    // a pure function of the prompt.
    std::uint64_t variation =
        settings.temperature > 0.0 ? call_counter_.fetch_add(1) + 1 : 0;
    return {rationale_text(trait, base, variation), 0, 0};
  }

 private:
  static std::string extract_quoted_trait(const std::string& user) {
    auto anchor = user.find("relevant to \"");
    if (anchor == std::string::npos) return "general";
    auto start = anchor + 13;
    auto end = user.find('"', start);
    if (end == std::string::npos) return "general";
    return user.substr(start, end - start);
  }

  static std::string extract_section(const std::string& user, const std::string& name) {
    std::string open = "[" + name + "]\n";
    std::string close = "\n(end of [" + name + "])";
    auto start = user.find(open);
    if (start == std::string::npos) return user;
    start += open.size();
    auto end = user.find(close, start);
    if (end == std::string::npos) return user.substr(start);
    return user.substr(start, end - start);
  }

  static std::string pick(const char* const* pool, std::size_t n, std::uint64_t h,
                          int slot) {
    return pool[text::fnv1a64(std::to_string(slot), h) % n];
  }

  std::string rationale_text(const std::string& trait, std::uint64_t base,
                             std::uint64_t variation) const {
    std::uint64_t vh = text::fnv1a64("variation:" + std::to_string(variation), base);
    std::string out;
    out += pick(kOpeners, 4, base, 0) + std::string(" ") +
           pick(kAdjectives, 8, base, 1) + " " + text::lowercase(trait) + ". ";
    out += "The " + std::string(pick(kQualities, 8, base, 2)) + " " +
           pick(kJudgements, 8, base, 3) + ", and the " + pick(kQualities, 8, base, 4) +
           " " + pick(kJudgements, 8, vh, 5) + ". ";
    out += "Overall the " + text::lowercase(trait) + " " + pick(kJudgements, 8, vh, 6) +
           ".";
    return out;
  }

  // Keeps every "[trait]:" tag, halves each segment body.
  static std::string compress(const std::string& combined) {
    struct Tag {
      std::size_t pos;
      std::size_t len;
      std::string text;
    };
    std::vector<Tag> tags;
    for (std::size_t i = 0; i < combined.size(); ++i) {
      if (combined[i] != '[') continue;
      auto close = combined.find("]:", i);
      if (close == std::string::npos) break;
      std::string inside = combined.substr(i + 1, close - i - 1);
      if (inside.find('\n') != std::string::npos || inside.empty()) continue;
      tags.push_back({i, close + 2 - i, combined.substr(i, close + 2 - i)});
      i = close + 1;
    }
    std::string out;
    for (std::size_t t = 0; t < tags.size(); ++t) {
      std::size_t body_start = tags[t].pos + tags[t].len;
      std::size_t body_end = t + 1 < tags.size() ? tags[t + 1].pos : combined.size();
      auto words = text::whitespace_tokens(
          combined.substr(body_start, body_end - body_start));
      std::size_t keep = std::max<std::size_t>(3, words.size() / 2);
      keep = std::min(keep, words.size());
      words.resize(keep);
      if (!out.empty()) out += " ";
      out += tags[t].text + " " + text::join(words, " ");
    }
    return out;
  }

  std::uint64_t seed_;
  std::atomic<std::uint64_t> call_counter_{0};
};

// offline -------------------------------------------------------------------------

class OfflineChatClient : public ChatClient {
 public:
  explicit OfflineChatClient(std::string generator_id)
      : generator_id_(std::move(generator_id)) {}
  std::string generator_id() const override { return generator_id_; }
  ChatResult complete(const std::string&, const std::string&,
                      const GenerationSettings&) override {
    throw Error("provider is offline (cache-only mode)");
  }

 private:
  std::string generator_id_;
};

}  // namespace

std::unique_ptr<ChatClient> make_http_client(const HttpClientConfig& config) {
  return std::make_unique<HttpChatClient>(config);
}

std::unique_ptr<ChatClient> make_replay_client(const std::filesystem::path& fixture,
                                               const std::string& generator_id) {
  return std::make_unique<ReplayChatClient>(fixture, generator_id);
}

std::unique_ptr<ChatClient> make_synthetic_client(std::uint64_t seed) {
  return std::make_unique<SyntheticChatClient>(seed);
}

std::unique_ptr<ChatClient> make_offline_client(const std::string& generator_id) {
  return std::make_unique<OfflineChatClient>(generator_id);
}

}  // namespace rmts
