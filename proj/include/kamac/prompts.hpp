#pragma once
// Prompt kit: the recruitment/assessment/interaction/update/decision
// template families plus the optional visual chain-of-thought preamble.
// Rendering is byte-deterministic; every placeholder must be bound.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kamac/core.hpp"

namespace kamac {

enum class TemplateId {
  P1,         // expert recruitment (free form, hierarchy examples)
  P1_strict,  // expert recruitment (exact-count, no substitutions)
  P2,         // initial assessment
  P3,         // agent interaction (consensus probe)
  P4,         // knowledge-gap detection
  P5,         // mid-discussion expert recruitment
  P6,         // agent update / final per-agent answer
  P7,         // moderator final decision
  VisualCoT,  // CT-scan preamble, prepended to P2 when ROI boxes exist
};

std::string to_string(TemplateId id);
TemplateId template_id_from_string(const std::string& s);

struct PromptTemplate {
  TemplateId id;
  std::optional<std::string> system_text;
  std::string user_text;
  std::vector<std::string> placeholders;  // union over system + user
};

// The exact final-answer line format agents are instructed to emit.
// parse_final_answer recognizes exactly this shape.
extern const std::string kAnswerTemplate;
extern const std::string kFinalAnswerTemplate;

const PromptTemplate& get_template(TemplateId id);

struct RenderedPrompt {
  std::optional<std::string> system_text;
  std::string user_text;
};

// Substitutes {{name}} markers. Throws ValidationError listing the missing
// names if any placeholder is unbound, or if markers survive rendering.
RenderedPrompt render(TemplateId id, const std::map<std::string, std::string>& bindings);

// System text for a role-playing agent; embeds role and scope verbatim.
std::string render_role_system(const ExpertSpec& role);

// "(A) text" option lines appended to the stem.
std::string render_question(const CaseRecord& c);

// Comma-separated display roles, for the {{agents}} placeholder.
std::string render_roster(const std::vector<ExpertSpec>& roster);

// Coordinate block for {{bbox_coords}}: per box, z/y/x min-max pairs.
std::string render_bbox_coords(const std::vector<Box3D>& boxes);

}  // namespace kamac
