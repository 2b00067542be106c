#include "rmts/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rmts/errors.hpp"
#include "rmts/jsonl.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace rmts {

// TraitSpec -----------------------------------------------------------------

int TraitSpec::grid_points() const {
  return static_cast<int>(std::llround((score_max - score_min) / score_step)) + 1;
}

bool TraitSpec::on_grid(double v) const {
  if (!(v >= score_min && v <= score_max)) return false;
  double steps = (v - score_min) / score_step;
  return std::abs(steps - std::round(steps)) < 1e-9;
}

double TraitSpec::snap_to_grid(double v) const {
  double steps = std::round((v - score_min) / score_step);
  steps = std::max(0.0, std::min(steps, static_cast<double>(grid_points() - 1)));
  return score_min + steps * score_step;
}

double TraitSpec::grid_midpoint() const {
  return score_min + ((grid_points() - 1) / 2) * score_step;
}

std::string TraitSpec::special_token() const {
  return "<" + text::replace_all(name, " ", "_") + ">";
}

std::string TraitSpec::tag() const { return "[" + text::lowercase(name) + "]"; }

// PromptSpec ----------------------------------------------------------------

const TraitSpec* PromptSpec::find_trait(const std::string& name) const {
  for (const auto& t : traits)
    if (t.name == name) return &t;
  return nullptr;
}

const TraitSpec& PromptSpec::trait(const std::string& name) const {
  const TraitSpec* t = find_trait(name);
  if (!t)
    throw ConfigError("trait '" + name + "' not declared for prompt " +
                      std::to_string(prompt_id));
  return *t;
}

bool PromptSpec::has_trait(const std::string& name) const {
  return find_trait(name) != nullptr;
}

std::vector<std::string> PromptSpec::rationale_traits() const {
  std::vector<std::string> out;
  for (const auto& name : decode_order)
    if (!trait(name).holistic) out.push_back(name);
  return out;
}

void PromptSpec::validate() const {
  if (decode_order.size() != traits.size())
    throw ConfigError("prompt " + std::to_string(prompt_id) +
                      ": decode_order must be a permutation of the traits");
  std::set<std::string> seen;
  for (const auto& name : decode_order) {
    if (!has_trait(name))
      throw ConfigError("prompt " + std::to_string(prompt_id) +
                        ": decode_order names unknown trait '" + name + "'");
    if (!seen.insert(name).second)
      throw ConfigError("prompt " + std::to_string(prompt_id) +
                        ": decode_order repeats trait '" + name + "'");
  }
  for (const auto& t : traits) {
    if (!(t.score_min < t.score_max))
      throw ConfigError("trait '" + t.name + "': score_min must be < score_max");
    double span = (t.score_max - t.score_min) / t.score_step;
    if (std::abs(span - std::round(span)) > 1e-9)
      throw ConfigError("trait '" + t.name +
                        "': range is not an integer multiple of score_step");
  }
  // The holistic trait, when present, decodes last.
  for (std::size_t i = 0; i < decode_order.size(); ++i) {
    if (trait(decode_order[i]).holistic && i + 1 != decode_order.size())
      throw ConfigError("prompt " + std::to_string(prompt_id) +
                        ": holistic trait must be last in decode_order");
  }
}

// DatasetSpec ---------------------------------------------------------------

const PromptSpec& DatasetSpec::prompt(int prompt_id) const {
  auto it = prompts.find(prompt_id);
  if (it == prompts.end())
    throw ConfigError("prompt " + std::to_string(prompt_id) +
                      " not declared in dataset config '" + dataset + "'");
  return it->second;
}

std::vector<std::string> DatasetSpec::all_trait_names() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& name : global_decode_order)
    if (seen.insert(name).second) out.push_back(name);
  for (const auto& [id, p] : prompts) {
    for (const auto& name : p.decode_order)
      if (seen.insert(name).second) out.push_back(name);
  }
  // Keep only traits that some prompt actually declares.
  std::vector<std::string> used;
  for (const auto& name : out) {
    for (const auto& [id, p] : prompts) {
      if (p.has_trait(name)) {
        used.push_back(name);
        break;
      }
    }
  }
  return used;
}

std::vector<std::string> DatasetSpec::display_trait_order() const {
  std::vector<std::string> order = all_trait_names();
  std::reverse(order.begin(), order.end());
  return order;
}

DatasetSpec DatasetSpec::load(const std::filesystem::path& trait_config) {
  std::ifstream in(trait_config);
  if (!in) throw ConfigError("cannot open trait config " + trait_config.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded())
    throw ConfigError("invalid JSON in trait config " + trait_config.string());

  DatasetSpec spec;
  spec.dataset = doc.value("dataset", "");
  spec.sentinel_prompt_id = doc.value("sentinel_prompt_id", 0);
  spec.id_column = doc.value("id_column", "essay_id");
  spec.prompt_column = doc.value("prompt_column", "");
  spec.text_column = doc.value("text_column", "essay");

  const json& trait_defs = doc.at("traits");
  std::vector<std::string> global_order =
      doc.value("decode_order", std::vector<std::string>{});
  spec.global_decode_order = global_order;

  for (const json& p : doc.at("prompts")) {
    PromptSpec ps;
    ps.prompt_id = p.at("prompt_id").get<int>();
    const json& ptraits = p.at("traits");
    for (auto it = ptraits.begin(); it != ptraits.end(); ++it) {
      const std::string& name = it.key();
      if (!trait_defs.contains(name))
        throw ConfigError("prompt trait '" + name + "' missing from traits table");
      const json& def = trait_defs.at(name);
      TraitSpec t;
      t.name = name;
      t.abbrev = def.value("abbrev", name);
      t.column = def.value("column", text::lowercase(name));
      t.holistic = def.value("holistic", false);
      const json& inst = it.value();
      t.score_min = inst.at("min").get<double>();
      t.score_max = inst.at("max").get<double>();
      t.score_step = inst.value("step", 1.0);
      t.rubric_text = inst.value("rubric", def.value("rubric", ""));
      ps.traits.push_back(std::move(t));
    }
    if (p.contains("decode_order")) {
      ps.decode_order = p.at("decode_order").get<std::vector<std::string>>();
    } else {
      for (const auto& name : global_order)
        if (ps.has_trait(name)) ps.decode_order.push_back(name);
    }
    ps.validate();
    spec.prompts[ps.prompt_id] = std::move(ps);
  }
  if (spec.prompts.empty())
    throw ConfigError("trait config declares no prompts");
  return spec;
}

// table parsing ---------------------------------------------------------------

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // parallel row line numbers below
  std::vector<std::size_t> lines;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

Table read_tsv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      t.header = text::split(line, '\t');
      continue;
    }
    if (line.empty()) continue;
    auto fields = text::split(line, '\t');
    if (fields.size() != t.header.size())
      throw ParseError("row has " + std::to_string(fields.size()) +
                           " columns, expected " + std::to_string(t.header.size()),
                       lineno);
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw ParseError("missing header row in " + file.string());
  return t;
}

// RFC-4180 CSV: quoted fields may contain separators, doubled quotes, and
// embedded newlines (Feedback Prize essays do).
Table read_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError("cannot open " + file.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());

  Table t;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  std::size_t lineno = 1, row_start_line = 1;
  bool row_has_data = false;

  auto end_field = [&]() {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&](std::size_t at_line) {
    end_field();
    if (t.header.empty()) {
      t.header = row;
    } else {
      if (row.size() != t.header.size())
        throw ParseError("row has " + std::to_string(row.size()) +
                             " columns, expected " + std::to_string(t.header.size()),
                         at_line);
      t.rows.push_back(row);
      t.lines.push_back(at_line);
    }
    row.clear();
    row_has_data = false;
  };

  for (std::size_t i = 0; i < data.size(); ++i) {
    char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++lineno;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        end_field();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_data || !field.empty() || !row.empty()) end_row(row_start_line);
        ++lineno;
        row_start_line = lineno;
        break;
      default:
        field += c;
        row_has_data = true;
        break;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", row_start_line);
  if (row_has_data || !field.empty() || !row.empty()) end_row(row_start_line);
  if (t.header.empty()) throw ParseError("missing header row in " + file.string());
  return t;
}

bool cell_is_absent(const std::string& raw) {
  std::string v = text::trim(raw);
  return v.empty() || v == "NA" || v == "NaN" || v == "nan" || v == "null";
}

double parse_score_cell(const std::string& raw, std::size_t lineno) {
  std::string v = text::trim(raw);
  char* end = nullptr;
  double val = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0' || !std::isfinite(val))
    throw ParseError("invalid score value '" + v + "'", lineno);
  return val;
}

void validate_score(const EssayRecord& rec, const TraitSpec& trait, double v) {
  if (!trait.on_grid(v)) {
    std::ostringstream msg;
    msg << "essay " << rec.essay_id << ": trait '" << trait.name << "' score "
        << v << " is outside [" << trait.score_min << ", " << trait.score_max
        << "] or off the step-" << trait.score_step << " grid";
    throw ValidationError(msg.str());
  }
}

void check_declared_columns(const Table& t, const DatasetSpec& spec) {
  std::set<std::string> needed;
  for (const auto& [id, p] : spec.prompts)
    for (const auto& trait : p.traits) needed.insert(trait.column);
  for (const auto& col : needed)
    if (t.column(col) < 0)
      throw SchemaError("missing trait column '" + col + "' in input header");
}

}  // namespace

// loaders ---------------------------------------------------------------------

std::vector<EssayRecord> load_asap(const std::filesystem::path& essay_file,
                                   const DatasetSpec& spec) {
  Table t = read_tsv(essay_file);
  int id_col = t.column(spec.id_column);
  int prompt_col = t.column(spec.prompt_column);
  int text_col = t.column(spec.text_column);
  if (id_col < 0) throw SchemaError("missing id column '" + spec.id_column + "'");
  if (prompt_col < 0)
    throw SchemaError("missing prompt column '" + spec.prompt_column + "'");
  if (text_col < 0)
    throw SchemaError("missing text column '" + spec.text_column + "'");
  check_declared_columns(t, spec);

  std::vector<EssayRecord> records;
  std::set<std::string> seen_ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::size_t lineno = t.lines[r];
    EssayRecord rec;
    rec.essay_id = text::trim(row[id_col]);
    char* end = nullptr;
    long pid = std::strtol(row[prompt_col].c_str(), &end, 10);
    if (end == row[prompt_col].c_str())
      throw ParseError("invalid prompt id '" + row[prompt_col] + "'", lineno);
    rec.prompt_id = static_cast<int>(pid);
    rec.text = text::strip_one_trailing_newline(row[text_col]);

    if (rec.essay_id.empty()) throw ValidationError("empty essay id at line " +
                                                    std::to_string(lineno));
    if (!seen_ids.insert(rec.essay_id).second)
      throw ValidationError("duplicate essay id " + rec.essay_id);
    if (rec.text.empty())
      throw ValidationError("essay " + rec.essay_id + " has empty text");

    const PromptSpec& ps = spec.prompt(rec.prompt_id);
    for (const auto& trait : ps.traits) {
      int col = t.column(trait.column);
      if (col < 0 || cell_is_absent(row[col])) continue;
      double v = parse_score_cell(row[col], lineno);
      validate_score(rec, trait, v);
      rec.gold_scores[trait.name] = v;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<EssayRecord> load_asap(const std::filesystem::path& essay_file,
                                   const std::filesystem::path& trait_config) {
  return load_asap(essay_file, DatasetSpec::load(trait_config));
}

std::vector<EssayRecord> load_feedback(const std::filesystem::path& csv_file,
                                       const DatasetSpec& spec) {
  Table t = read_csv(csv_file);
  int id_col = t.column(spec.id_column);
  int text_col = t.column(spec.text_column);
  if (id_col < 0) throw SchemaError("missing id column '" + spec.id_column + "'");
  if (text_col < 0)
    throw SchemaError("missing text column '" + spec.text_column + "'");
  check_declared_columns(t, spec);

  const PromptSpec& ps = spec.prompt(spec.sentinel_prompt_id);
  std::vector<EssayRecord> records;
  std::set<std::string> seen_ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::size_t lineno = t.lines[r];
    EssayRecord rec;
    rec.essay_id = text::trim(row[id_col]);
    rec.prompt_id = spec.sentinel_prompt_id;
    rec.text = text::strip_one_trailing_newline(row[text_col]);

    if (rec.essay_id.empty()) throw ValidationError("empty essay id at line " +
                                                    std::to_string(lineno));
    if (!seen_ids.insert(rec.essay_id).second)
      throw ValidationError("duplicate essay id " + rec.essay_id);
    if (rec.text.empty())
      throw ValidationError("essay " + rec.essay_id + " has empty text");

    for (const auto& trait : ps.traits) {
      int col = t.column(trait.column);
      if (col < 0 || cell_is_absent(row[col]))
        throw ValidationError("essay " + rec.essay_id + ": trait '" + trait.name +
                              "' score is missing");
      double v = parse_score_cell(row[col], lineno);
      validate_score(rec, trait, v);
      rec.gold_scores[trait.name] = v;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<EssayRecord> load_feedback(const std::filesystem::path& csv_file,
                                       const std::filesystem::path& trait_config) {
  return load_feedback(csv_file, DatasetSpec::load(trait_config));
}

std::vector<MergeConflict> merge_trait_table(std::vector<EssayRecord>& records,
                                             const std::filesystem::path& table,
                                             const DatasetSpec& spec) {
  Table t = table.extension() == ".tsv" ? read_tsv(table) : read_csv(table);
  int id_col = t.column(spec.id_column);
  if (id_col < 0) id_col = 0;  // fall back to the first column as the join key

  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id[records[i].essay_id] = i;

  std::vector<MergeConflict> conflicts;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto it = by_id.find(text::trim(row[id_col]));
    if (it == by_id.end()) continue;
    EssayRecord& rec = records[it->second];
    const PromptSpec& ps = spec.prompt(rec.prompt_id);
    for (const auto& trait : ps.traits) {
      int col = t.column(trait.column);
      if (col < 0 || cell_is_absent(row[col])) continue;
      double v = parse_score_cell(row[col], t.lines[r]);
      validate_score(rec, trait, v);
      auto existing = rec.gold_scores.find(trait.name);
      if (existing != rec.gold_scores.end()) {
        // The record's value wins (primary source takes precedence).
        if (existing->second != v)
          conflicts.push_back({rec.essay_id, trait.name, existing->second, v});
      } else {
        rec.gold_scores[trait.name] = v;
      }
    }
  }
  return conflicts;
}

// folds -----------------------------------------------------------------------

namespace {

// Extras land on spaced group indices so that adjacent groups (one fold's
// test+dev) never both carry an extra, keeping every fold within +-1 of
// the 60/20/20 ratio per prompt.
constexpr int kDealOrder[5] = {0, 2, 4, 1, 3};

void deterministic_shuffle(std::vector<std::size_t>& idx, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

std::string label_vector_key(const EssayRecord& rec) {
  std::string key;
  for (const auto& [trait, score] : rec.gold_scores)
    key += trait + "=" + text::format_score(score) + "|";
  return key;
}

}  // namespace

std::vector<FoldSplit> make_folds(const std::vector<EssayRecord>& records,
                                  int n_folds, std::uint64_t seed,
                                  bool stratified) {
  if (n_folds != 5)
    throw ValidationError("the fold protocol is defined for n_folds = 5");
  if (records.size() < static_cast<std::size_t>(n_folds))
    throw ValidationError("need at least " + std::to_string(n_folds) +
                          " records, got " + std::to_string(records.size()));

  // groups[g] collects essay ids; fold k tests on group k.
  std::vector<std::vector<std::string>> groups(n_folds);

  if (stratified) {
    // Order by a seed-keyed hash of the gold label vector, then deal
    // round-robin: identical label vectors sort adjacently and spread
    // across groups, balancing the joint label distribution.
    std::vector<std::pair<std::uint64_t, const EssayRecord*>> keyed;
    keyed.reserve(records.size());
    for (const auto& rec : records)
      keyed.emplace_back(text::fnv1a64(label_vector_key(rec), seed ^ 0x9e3779b97f4a7c15ULL),
                         &rec);
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second->essay_id < b.second->essay_id;
    });
    for (std::size_t p = 0; p < keyed.size(); ++p)
      groups[kDealOrder[p % 5]].push_back(keyed[p].second->essay_id);
  } else {
    // Split each prompt independently.
    std::map<int, std::vector<std::size_t>> by_prompt;
    for (std::size_t i = 0; i < records.size(); ++i)
      by_prompt[records[i].prompt_id].push_back(i);
    for (auto& [prompt_id, idx] : by_prompt) {
      deterministic_shuffle(idx, text::fnv1a64("prompt:" + std::to_string(prompt_id),
                                               seed ^ 0x6a09e667f3bcc909ULL));
      for (std::size_t p = 0; p < idx.size(); ++p)
        groups[kDealOrder[p % 5]].push_back(records[idx[p]].essay_id);
    }
  }

  std::vector<FoldSplit> folds(n_folds);
  for (int k = 0; k < n_folds; ++k) {
    folds[k].fold_index = k;
    folds[k].test_ids.insert(groups[k].begin(), groups[k].end());
    const auto& dev = groups[(k + 1) % n_folds];
    folds[k].dev_ids.insert(dev.begin(), dev.end());
    for (int g = 2; g < n_folds; ++g) {
      const auto& tr = groups[(k + g) % n_folds];
      folds[k].train_ids.insert(tr.begin(), tr.end());
    }
  }
  return folds;
}

// cache / fold files ------------------------------------------------------------

void save_cache(const std::vector<EssayRecord>& records,
                const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + file.string());
  for (const auto& rec : records) {
    json scores = json::object();
    for (const auto& [trait, v] : rec.gold_scores) scores[trait] = v;
    json obj = {{"essay_id", rec.essay_id},
                {"prompt_id", rec.prompt_id},
                {"text", rec.text},
                {"gold_scores", scores}};
    out << obj.dump() << "\n";
  }
}

std::vector<EssayRecord> load_cache(const std::filesystem::path& file) {
  std::vector<EssayRecord> records;
  jsonl::for_each(file, [&](std::size_t lineno, const json& obj) {
    EssayRecord rec;
    try {
      rec.essay_id = obj.at("essay_id").get<std::string>();
      rec.prompt_id = obj.at("prompt_id").get<int>();
      rec.text = obj.at("text").get<std::string>();
      for (auto it = obj.at("gold_scores").begin(); it != obj.at("gold_scores").end(); ++it)
        rec.gold_scores[it.key()] = it.value().get<double>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad cache record: ") + e.what(), lineno);
    }
    records.push_back(std::move(rec));
  });
  return records;
}

void save_folds(const std::vector<FoldSplit>& folds,
                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& fold : folds) {
    json obj = {{"fold_index", fold.fold_index},
                {"train_ids", fold.train_ids},
                {"dev_ids", fold.dev_ids},
                {"test_ids", fold.test_ids}};
    std::ofstream out(dir / ("fold_" + std::to_string(fold.fold_index) + ".json"),
                      std::ios::trunc);
    if (!out) throw ParseError("cannot write fold file in " + dir.string());
    out << obj.dump(2) << "\n";
  }
}

std::vector<FoldSplit> load_folds(const std::filesystem::path& dir) {
  std::vector<FoldSplit> folds;
  for (int k = 0;; ++k) {
    auto file = dir / ("fold_" + std::to_string(k) + ".json");
    if (!std::filesystem::exists(file)) break;
    std::ifstream in(file);
    json obj = json::parse(in, nullptr, false);
    if (obj.is_discarded()) throw ParseError("invalid JSON in " + file.string());
    FoldSplit fold;
    fold.fold_index = obj.at("fold_index").get<int>();
    for (const auto& id : obj.at("train_ids")) fold.train_ids.insert(id.get<std::string>());
    for (const auto& id : obj.at("dev_ids")) fold.dev_ids.insert(id.get<std::string>());
    for (const auto& id : obj.at("test_ids")) fold.test_ids.insert(id.get<std::string>());
    folds.push_back(std::move(fold));
  }
  if (folds.empty()) throw ParseError("no fold files found in " + dir.string());
  return folds;
}

}  // namespace rmts
