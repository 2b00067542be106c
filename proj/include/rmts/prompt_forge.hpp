#ifndef RMTS_PROMPT_FORGE_HPP_
#define RMTS_PROMPT_FORGE_HPP_

#include <filesystem>
#include <map>
#include <string>

#include "rmts/corpus.hpp"
#include "rmts/rationale.hpp"

namespace rmts {

// The fixed template skeleton shared by every trait prompt: committee
// system message, instruction line, anonymization note, and the question
// with its word limit. Templates are data; this is loaded from the prompt
// config file.
struct TemplateSpec {
  std::string system_message;
  std::string instruction_line;
  std::string note_text;
  std::string question_template;  // placeholders: {trait}, {word_limit}
  int word_limit = 50;
  std::string compression_instruction;  // placeholder: {rationale}

  void validate() const;
};

// Writing-prompt texts and the template skeleton for one dataset.
struct PromptConfig {
  std::string dataset;
  TemplateSpec templ;
  // prompt_id -> (instructions, source excerpt; excerpt empty when none)
  std::map<int, std::pair<std::string, std::string>> prompt_texts;

  static PromptConfig load(const std::filesystem::path& prompt_config);
  // Copies instructions/excerpts onto the matching PromptSpecs.
  void apply(DatasetSpec& spec) const;
};

enum class PromptVariant { standard, excerpt_free };

struct RenderedPrompt {
  std::string system_message;
  std::string user_message;
  std::string trait_name;
  std::string essay_id;
  int prompt_id = 0;
  std::string content_hash;  // stable digest of (system_message, user_message)
};

// Renders the per-trait evaluation prompt: Prompt -> Rubric -> instruction
// line -> Note -> Essay -> Question, with the essay embedded verbatim.
// excerpt_free omits the source-excerpt part of the writing prompt.
RenderedPrompt render_trait_prompt(const EssayRecord& record, const TraitSpec& trait,
                                   const PromptSpec& prompt_spec,
                                   const TemplateSpec& templ,
                                   PromptVariant variant = PromptVariant::standard);

// Renders the rationale-compression prompt, carrying the original
// combined rationale verbatim.
RenderedPrompt render_compression_prompt(const Rationale& rationale,
                                         const TemplateSpec& templ);

}  // namespace rmts

#endif  // RMTS_PROMPT_FORGE_HPP_
