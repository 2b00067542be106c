#include "rmts/jsonl.hpp"

#include <fstream>

#include "rmts/errors.hpp"

namespace rmts::jsonl {

void for_each(const std::filesystem::path& file,
              const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded())
      throw ParseError("invalid JSON in " + file.string(), lineno);
    fn(lineno, obj);
  }
}

void append(const std::filesystem::path& file, const nlohmann::json& obj) {
  std::ofstream out(file, std::ios::app);
  if (!out) throw ParseError("cannot open " + file.string() + " for append");
  out << obj.dump() << "\n";
}

}  // namespace rmts::jsonl
