#include "rmts/prompt_forge.hpp"

#include <fstream>

#include <json.hpp>

#include "rmts/errors.hpp"
#include "rmts/text.hpp"

using nlohmann::json;

namespace rmts {

void TemplateSpec::validate() const {
  if (system_message.empty()) throw ConfigError("template: empty system_message");
  if (question_template.find("{trait}") == std::string::npos)
    throw ConfigError("template: question must contain the {trait} placeholder");
  if (question_template.find("{word_limit}") == std::string::npos)
    throw ConfigError("template: question must contain the {word_limit} placeholder");
  if (word_limit <= 0) throw ConfigError("template: word_limit must be positive");
}

PromptConfig PromptConfig::load(const std::filesystem::path& prompt_config) {
  std::ifstream in(prompt_config);
  if (!in) throw ConfigError("cannot open prompt config " + prompt_config.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded())
    throw ConfigError("invalid JSON in prompt config " + prompt_config.string());

  PromptConfig config;
  config.dataset = doc.value("dataset", "");
  const json& t = doc.at("template");
  config.templ.system_message = t.at("system_message").get<std::string>();
  config.templ.instruction_line = t.at("instruction_line").get<std::string>();
  config.templ.note_text = t.at("note").get<std::string>();
  config.templ.question_template = t.at("question").get<std::string>();
  config.templ.word_limit = t.value("word_limit", 50);
  config.templ.compression_instruction = t.value(
      "compression_instruction",
      std::string("Rewrite the following trait-wise essay evaluation to be more "
                  "concise while retaining key details. Keep every trait tag and "
                  "the order of the tags; shorten only the text after each tag. "
                  "Return only the rewritten evaluation.\n\n[Rationale]\n{rationale}\n"
                  "(end of [Rationale])"));
  config.templ.validate();

  for (const json& p : doc.value("prompts", json::array())) {
    int id = p.at("prompt_id").get<int>();
    config.prompt_texts[id] = {p.value("instructions", ""),
                               p.value("source_excerpt", "")};
  }
  return config;
}

void PromptConfig::apply(DatasetSpec& spec) const {
  for (auto& [id, prompt] : spec.prompts) {
    auto it = prompt_texts.find(id);
    if (it == prompt_texts.end()) continue;
    prompt.essay_instructions = it->second.first;
    prompt.source_excerpt = it->second.second;
  }
}

namespace {

std::string hash_messages(const std::string& system, const std::string& user) {
  return text::hex64(text::fnv1a64(system + "\x1f" + user));
}

std::string section(const std::string& name, const std::string& body) {
  return "[" + name + "]\n" + body + "\n(end of [" + name + "])";
}

}  // namespace

RenderedPrompt render_trait_prompt(const EssayRecord& record, const TraitSpec& trait,
                                   const PromptSpec& prompt_spec,
                                   const TemplateSpec& templ, PromptVariant variant) {
  if (trait.rubric_text.empty())
    throw ConfigError("trait '" + trait.name + "' (prompt " +
                      std::to_string(prompt_spec.prompt_id) +
                      ") has no rubric text; cannot render a rationale prompt");
  if (!prompt_spec.has_trait(trait.name))
    throw ConfigError("trait '" + trait.name + "' not declared for prompt " +
                      std::to_string(prompt_spec.prompt_id));

  std::string prompt_body = prompt_spec.essay_instructions;
  if (variant == PromptVariant::standard && !prompt_spec.source_excerpt.empty())
    prompt_body += "\n" + prompt_spec.source_excerpt;

  std::string question = templ.question_template;
  question = text::replace_all(question, "{trait}", text::lowercase(trait.name));
  question = text::replace_all(question, "{word_limit}",
                               std::to_string(templ.word_limit));

  std::string user;
  user += section("Prompt", prompt_body);
  user += "\n\n";
  user += section("Trait-Specific Rubric Guidelines", trait.rubric_text);
  user += "\n\n";
  user += templ.instruction_line;
  user += "\n\n";
  user += section("Note", templ.note_text);
  user += "\n\n";
  user += section("Essay", record.text);
  user += "\n\n";
  user += question;

  RenderedPrompt out;
  out.system_message = templ.system_message;
  out.user_message = std::move(user);
  out.trait_name = trait.name;
  out.essay_id = record.essay_id;
  out.prompt_id = record.prompt_id;
  out.content_hash = hash_messages(out.system_message, out.user_message);
  return out;
}

RenderedPrompt render_compression_prompt(const Rationale& rationale,
                                         const TemplateSpec& templ) {
  if (rationale.segments.empty())
    throw ValidationError("cannot build a compression prompt from an empty rationale");

  RenderedPrompt out;
  out.system_message = templ.system_message;
  out.user_message = text::replace_all(templ.compression_instruction, "{rationale}",
                                       rationale.combined_text());
  out.trait_name = "";
  out.essay_id = rationale.essay_id;
  out.prompt_id = rationale.prompt_id;
  out.content_hash = hash_messages(out.system_message, out.user_message);
  return out;
}

}  // namespace rmts
