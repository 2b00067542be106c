#ifndef RMTS_JSONL_HPP_
#define RMTS_JSONL_HPP_

#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

namespace rmts::jsonl {

// Calls fn(line_number, object) for every non-blank line. Throws ParseError
// with the line number on malformed JSON.
void for_each(const std::filesystem::path& file,
              const std::function<void(std::size_t, const nlohmann::json&)>& fn);

// Appends one compact object per line.
void append(const std::filesystem::path& file, const nlohmann::json& obj);

}  // namespace rmts::jsonl

#endif  // RMTS_JSONL_HPP_
