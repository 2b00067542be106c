#ifndef RMTS_TEXT_HPP_
#define RMTS_TEXT_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace rmts::text {

// Splits on runs of ASCII whitespace; never yields empty tokens.
std::vector<std::string> whitespace_tokens(std::string_view s);

// Token count under the whitespace tokenizer (no allocation per token).
std::size_t whitespace_token_count(std::string_view s);

std::string lowercase(std::string_view s);
std::string trim(std::string_view s);

// Strips exactly one trailing "\r\n" or "\n"; everything else is preserved.
std::string strip_one_trailing_newline(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split(std::string_view s, char sep);

// Replaces every occurrence of `from` (non-empty) with `to`.
std::string replace_all(std::string_view s, std::string_view from,
                        std::string_view to);

// FNV-1a 64-bit. Stable across platforms; used for cache keys and the
// stratified-fold ordering, not for security.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Formats a grid score: integral values print without a decimal point,
// half-point values print as e.g. "3.5".
std::string format_score(double v);

// Named token counters ("whitespace" is registered by default).
using TokenCounter = std::function<std::size_t(std::string_view)>;
void register_token_counter(const std::string& id, TokenCounter counter);
bool has_token_counter(const std::string& id);
// Throws ConfigError for unknown ids.
std::size_t count_tokens(const std::string& tokenizer_id, std::string_view s);

}  // namespace rmts::text

#endif  // RMTS_TEXT_HPP_
