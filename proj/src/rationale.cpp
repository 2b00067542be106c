#include "rmts/rationale.hpp"

#include <algorithm>

#include "rmts/corpus.hpp"
#include "rmts/text.hpp"

namespace rmts {

std::string Rationale::combined_text() const {
  std::string out;
  for (const auto& seg : segments) {
    if (!out.empty()) out += " ";
    out += "[" + text::lowercase(seg.trait_name) + "]: " + seg.text;
  }
  return out;
}

Rationale Rationale::without_trait(const std::string& trait_name) const {
  Rationale out = *this;
  out.segments.erase(std::remove_if(out.segments.begin(), out.segments.end(),
                                    [&](const RationaleSegment& seg) {
                                      return seg.trait_name == trait_name;
                                    }),
                     out.segments.end());
  return out;
}

std::vector<RationaleSegment> parse_combined_rationale(const std::string& combined,
                                                       const PromptSpec& spec) {
  struct TagHit {
    std::size_t pos;
    std::size_t len;
    std::string trait;
  };
  std::vector<TagHit> hits;
  for (const auto& trait : spec.traits) {
    std::string tag = trait.tag() + ":";
    std::size_t pos = 0;
    while ((pos = combined.find(tag, pos)) != std::string::npos) {
      hits.push_back({pos, tag.size(), trait.name});
      pos += tag.size();
    }
  }
  std::sort(hits.begin(), hits.end(),
            [](const TagHit& a, const TagHit& b) { return a.pos < b.pos; });

  std::vector<RationaleSegment> segments;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    std::size_t body_start = hits[i].pos + hits[i].len;
    std::size_t body_end = i + 1 < hits.size() ? hits[i + 1].pos : combined.size();
    RationaleSegment seg;
    seg.trait_name = hits[i].trait;
    seg.text = text::trim(combined.substr(body_start, body_end - body_start));
    segments.push_back(std::move(seg));
  }
  return segments;
}

}  // namespace rmts
