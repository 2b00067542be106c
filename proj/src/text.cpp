#include "rmts/text.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>

#include "rmts/errors.hpp"

namespace rmts::text {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::size_t whitespace_token_count(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string strip_one_trailing_newline(std::string_view s) {
  if (s.size() >= 2 && s.substr(s.size() - 2) == "\r\n")
    return std::string(s.substr(0, s.size() - 2));
  if (!s.empty() && s.back() == '\n') return std::string(s.substr(0, s.size() - 1));
  return std::string(s);
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string replace_all(std::string_view s, std::string_view from,
                        std::string_view to) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (!from.empty() && s.substr(i, from.size()) == from) {
      out += to;
      i += from.size();
    } else {
      out += s[i++];
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string format_score(double v) {
  double r = std::round(v);
  if (std::abs(v - r) < 1e-9) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(r));
    return std::string(buf);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return std::string(buf);
}

namespace {

std::mutex& counters_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, TokenCounter>& counters() {
  static std::map<std::string, TokenCounter> reg = {
      {"whitespace", [](std::string_view s) { return whitespace_token_count(s); }},
  };
  return reg;
}

}  // namespace

void register_token_counter(const std::string& id, TokenCounter counter) {
  std::lock_guard<std::mutex> lock(counters_mutex());
  counters()[id] = std::move(counter);
}

bool has_token_counter(const std::string& id) {
  std::lock_guard<std::mutex> lock(counters_mutex());
  return counters().count(id) > 0;
}

std::size_t count_tokens(const std::string& tokenizer_id, std::string_view s) {
  TokenCounter counter;
  {
    std::lock_guard<std::mutex> lock(counters_mutex());
    auto it = counters().find(tokenizer_id);
    if (it == counters().end())
      throw ConfigError("unknown tokenizer id: " + tokenizer_id);
    counter = it->second;
  }
  return counter(s);
}

}  // namespace rmts::text
