#ifndef RMTS_RATIONALE_HPP_
#define RMTS_RATIONALE_HPP_

#include <string>
#include <vector>

namespace rmts {

struct PromptSpec;

// One trait's free-text qualitative assessment.
struct RationaleSegment {
  std::string trait_name;
  std::string text;
  std::string generator_id;
  int iteration = 0;
};

// The per-essay rationale: segments ordered sub-traits first, holistic
// last (decode order restricted to traits that have rationales).
struct Rationale {
  std::string essay_id;
  int prompt_id = 0;
  std::vector<RationaleSegment> segments;
  bool compressed = false;

  // "[trait]: text" segments joined by single spaces, the Appendix-G shape.
  std::string combined_text() const;
  // Copy without the named trait's segment (ablation input).
  Rationale without_trait(const std::string& trait_name) const;
};

// Splits a combined text back into (trait, text) segments by scanning for
// the prompt's known "[trait]:" tags. Inverse of combined_text for texts
// whose segment bodies do not themselves contain a declared tag.
std::vector<RationaleSegment> parse_combined_rationale(const std::string& combined,
                                                       const PromptSpec& spec);

}  // namespace rmts

#endif  // RMTS_RATIONALE_HPP_
