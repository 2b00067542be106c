#include "rmts/sequence_codec.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "rmts/errors.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace rmts {

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::essay_only: return "essay_only";
    case InputMode::essay_plus_rationale: return "essay_plus_rationale";
    case InputMode::rationale_only: return "rationale_only";
  }
  return "essay_only";
}

InputMode input_mode_from_string(const std::string& s) {
  if (s == "essay_only") return InputMode::essay_only;
  if (s == "essay_plus_rationale") return InputMode::essay_plus_rationale;
  if (s == "rationale_only") return InputMode::rationale_only;
  throw ConfigError("unknown input mode '" + s + "'");
}

// SpecialTokenSet -------------------------------------------------------------

SpecialTokenSet SpecialTokenSet::for_dataset(const DatasetSpec& spec) {
  SpecialTokenSet set;
  set.markers = {"<Essay>", "<Rationale>"};
  for (const auto& name : spec.all_trait_names()) {
    TraitSpec t;
    t.name = name;
    set.markers.push_back(t.special_token());
  }
  return set;
}

std::string SpecialTokenSet::version() const {
  return text::hex64(text::fnv1a64(text::join(markers, "\x1f")));
}

void SpecialTokenSet::write_manifest(const std::filesystem::path& file) const {
  json obj = {{"version", version()}, {"markers", markers}};
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + file.string());
  out << obj.dump(2) << "\n";
}

SpecialTokenSet SpecialTokenSet::read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw ParseError("invalid JSON in " + file.string());
  SpecialTokenSet set;
  set.markers = obj.at("markers").get<std::vector<std::string>>();
  return set;
}

// assemble_input --------------------------------------------------------------

AssembledInput assemble_input(const EssayRecord& record, const Rationale* rationale,
                              InputMode mode, const PromptSpec& spec,
                              int token_limit) {
  const bool needs_rationale = mode != InputMode::essay_only;
  if (needs_rationale && (rationale == nullptr || rationale->segments.empty()))
    throw ValidationError("mode " + to_string(mode) + " requires a rationale for essay " +
                          record.essay_id);

  const std::string prefix =
      "Score the essay of the prompt " + std::to_string(record.prompt_id);
  const bool has_essay = mode != InputMode::rationale_only;
  const std::string rationale_text = needs_rationale ? rationale->combined_text() : "";

  AssembledInput out;
  out.essay_id = record.essay_id;
  out.prompt_id = record.prompt_id;
  out.mode = mode;
  if (has_essay) out.special_tokens_used.push_back("<Essay>");
  if (needs_rationale) out.special_tokens_used.push_back("<Rationale>");

  const std::size_t overhead =
      text::whitespace_token_count(prefix) + out.special_tokens_used.size();
  if (token_limit < static_cast<int>(overhead))
    throw ValidationError("token_limit " + std::to_string(token_limit) +
                          " is smaller than the prefix and markers (" +
                          std::to_string(overhead) + " tokens)");

  std::size_t essay_tokens = has_essay ? text::whitespace_token_count(record.text) : 0;
  std::size_t rationale_tokens =
      needs_rationale ? text::whitespace_token_count(rationale_text) : 0;
  std::size_t budget = static_cast<std::size_t>(token_limit) - overhead;

  std::size_t keep_essay = essay_tokens, keep_rationale = rationale_tokens;
  if (essay_tokens + rationale_tokens > budget) {
    out.truncated = true;
    // Rationale tail goes first; the essay is the primary evidence.
    std::size_t over = essay_tokens + rationale_tokens - budget;
    std::size_t cut = std::min(over, rationale_tokens);
    keep_rationale -= cut;
    over -= cut;
    keep_essay -= std::min(over, essay_tokens);
  }

  auto take_tokens = [](const std::string& s, std::size_t n) {
    auto tokens = text::whitespace_tokens(s);
    tokens.resize(std::min(n, tokens.size()));
    return text::join(tokens, " ");
  };

  std::string body = prefix;
  if (has_essay) {
    body += " <Essay>";
    std::string essay = out.truncated ? take_tokens(record.text, keep_essay) : record.text;
    if (!essay.empty()) body += " " + essay;
  }
  if (needs_rationale) {
    body += " <Rationale>";
    std::string rat =
        out.truncated ? take_tokens(rationale_text, keep_rationale) : rationale_text;
    if (!rat.empty()) body += " " + rat;
  }
  out.text = std::move(body);
  return out;
}

// encode_targets --------------------------------------------------------------

std::string encode_targets(const std::map<std::string, double>& gold,
                           const PromptSpec& spec) {
  for (const auto& [name, v] : gold) {
    const TraitSpec& trait = spec.trait(name);  // throws for undeclared traits
    if (!trait.on_grid(v))
      throw ValidationError("trait '" + name + "' score " + std::to_string(v) +
                            " is off the declared grid");
  }
  std::string out;
  for (const auto& name : spec.decode_order) {
    auto it = gold.find(name);
    if (it == gold.end()) continue;
    if (!out.empty()) out += " ";
    out += spec.trait(name).special_token() + " " + text::format_score(it->second);
  }
  return out;
}

// parse_scores ----------------------------------------------------------------

namespace {

// Parses a plain decimal literal (optional sign, no exponent) at s[pos],
// after optional whitespace and a single ':' or '=' separator.
bool scan_number(const std::string& s, std::size_t pos, double* value) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  if (pos < s.size() && (s[pos] == ':' || s[pos] == '=')) {
    ++pos;
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
  std::size_t start = pos;
  if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
  std::size_t digits = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    ++pos;
    ++digits;
  }
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      ++pos;
      ++digits;
    }
  }
  if (digits == 0) return false;
  *value = std::strtod(s.substr(start, pos - start).c_str(), nullptr);
  return std::isfinite(*value);
}

}  // namespace

ScoreSequence parse_scores(const std::string& raw, const PromptSpec& spec) {
  ScoreSequence result;
  result.raw = raw;

  std::set<std::string> clamped, duplicated;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '<') continue;
    // Longest token match at this position.
    const TraitSpec* hit = nullptr;
    std::size_t hit_len = 0;
    for (const auto& trait : spec.traits) {
      std::string token = trait.special_token();
      if (token.size() > hit_len && raw.compare(i, token.size(), token) == 0) {
        hit = &trait;
        hit_len = token.size();
      }
    }
    if (!hit) continue;
    double value = 0.0;
    if (!scan_number(raw, i + hit_len, &value)) continue;
    if (result.parsed.count(hit->name)) {
      duplicated.insert(hit->name);
    } else {
      double snapped = hit->snap_to_grid(value);
      if (!hit->on_grid(value)) clamped.insert(hit->name);
      result.parsed[hit->name] = snapped;
    }
    i += hit_len - 1;
  }

  for (const auto& name : spec.decode_order)
    if (!result.parsed.count(name)) result.unparsed_traits.push_back(name);
  result.clamped_traits.assign(clamped.begin(), clamped.end());
  result.duplicate_traits.assign(duplicated.begin(), duplicated.end());
  return result;
}

// evaluable_pairs -------------------------------------------------------------

std::vector<EvalPair> evaluable_pairs(const ScoreSequence& parsed,
                                      const std::map<std::string, double>& gold,
                                      const PromptSpec& spec) {
  std::vector<EvalPair> pairs;
  for (const auto& name : spec.decode_order) {
    auto g = gold.find(name);
    if (g == gold.end()) continue;  // NaN gold: disregard the prediction
    EvalPair pair;
    pair.trait = name;
    pair.gold = g->second;
    auto p = parsed.parsed.find(name);
    if (p != parsed.parsed.end()) {
      pair.pred = p->second;
    } else {
      pair.pred = spec.trait(name).grid_midpoint();
      pair.fallback = true;
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace rmts
