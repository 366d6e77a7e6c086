#include "kamac/core.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace kamac {

std::string collapse_whitespace(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool in_space = true;  // leading whitespace dropped
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_space = false;
    }
  }
  return out;
}

std::string normalize_role(const std::string& raw) {
  std::string out = collapse_whitespace(raw);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  if (out.empty()) throw ValidationError("invalid role: empty after normalization");
  return out;
}

void Box3D::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(z_min <= z_max && y_min <= y_max && x_min <= x_max))
    throw ValidationError("Box3D: min exceeds max");
  for (double v : {z_min, z_max, y_min, y_max, x_min, x_max})
    if (!in_unit(v)) throw ValidationError("Box3D: coordinate outside [0,1]");
}

void CaseRecord::validate() const {
  if (case_id.empty()) throw ValidationError("CaseRecord: empty case_id");
  if (options.empty()) throw ValidationError("CaseRecord " + case_id + ": no options");
  std::vector<std::string> seen;
  for (const auto& [label, text] : options) {
    if (label.size() != 1 || !std::isupper(static_cast<unsigned char>(label[0])))
      throw ValidationError("CaseRecord " + case_id + ": bad option label '" + label + "'");
    if (std::find(seen.begin(), seen.end(), label) != seen.end())
      throw ValidationError("CaseRecord " + case_id + ": duplicate option label " + label);
    seen.push_back(label);
    (void)text;
  }
  if (!has_label(gold_label))
    throw ValidationError("CaseRecord " + case_id + ": gold label '" + gold_label +
                          "' not among options");
  if (!roi_boxes.empty() && modality != Modality::text_with_image)
    throw ValidationError("CaseRecord " + case_id + ": roi_boxes without image modality");
  for (const auto& b : roi_boxes) b.validate();
}

std::vector<std::string> CaseRecord::labels() const {
  std::vector<std::string> out;
  out.reserve(options.size());
  for (const auto& [label, _] : options) out.push_back(label);
  return out;
}

bool CaseRecord::has_label(const std::string& label) const {
  return std::any_of(options.begin(), options.end(),
                     [&](const auto& kv) { return kv.first == label; });
}

HierarchyEdge HierarchyEdge::peer(const std::string& a, const std::string& b) {
  HierarchyEdge e;
  e.kind = EdgeKind::peer;
  if (normalize_role(a) <= normalize_role(b)) {
    e.from_role = collapse_whitespace(a);
    e.to_role = collapse_whitespace(b);
  } else {
    e.from_role = collapse_whitespace(b);
    e.to_role = collapse_whitespace(a);
  }
  return e;
}

HierarchyEdge HierarchyEdge::directed(const std::string& from, const std::string& to) {
  HierarchyEdge e;
  e.kind = EdgeKind::directed;
  e.from_role = collapse_whitespace(from);
  e.to_role = collapse_whitespace(to);
  return e;
}

void OpinionBoard::add(const std::string& role, const std::string& text, int round) {
  for (auto& e : entries) {
    if (e.round == round && normalize_role(e.role) == normalize_role(role)) {
      e.text = text;  // one entry per role per round
      return;
    }
  }
  entries.push_back({role, text, round});
}

std::string OpinionBoard::render() const {
  std::ostringstream os;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (i) os << "\n\n";
    os << "[Round " << entries[i].round << "] " << entries[i].role << ": "
       << entries[i].text;
  }
  return os.str();
}

bool DiscussionState::has_role(const std::string& normalized_role) const {
  return std::any_of(roster.begin(), roster.end(), [&](const ExpertSpec& e) {
    return e.normalized() == normalized_role;
  });
}

void RunConfig::validate() const {
  if (max_rounds_R < 1) throw ValidationError("RunConfig: max_rounds_R must be >= 1");
  if (initial_experts_N < 1) throw ValidationError("RunConfig: initial_experts_N must be >= 1");
  if (static_team_size < 1) throw ValidationError("RunConfig: static_team_size must be >= 1");
  if (concurrency_limit < 1) throw ValidationError("RunConfig: concurrency_limit must be >= 1");
  if (retry_policy.max_attempts < 1) throw ValidationError("RunConfig: max_attempts must be >= 1");
  if (max_new_per_round < 1) throw ValidationError("RunConfig: max_new_per_round must be >= 1");
}

LedgerSummary ledger_merge(const std::vector<UsageLedger>& ledgers) {
  if (ledgers.empty()) throw InputError("ledger_merge: empty input");
  LedgerSummary s;
  s.cases = static_cast<int>(ledgers.size());
  for (const auto& l : ledgers) {
    s.avg_experts += l.expert_count;
    s.avg_calls += static_cast<double>(l.backend_calls);
    s.avg_prompt_tokens += static_cast<double>(l.prompt_tokens);
    s.avg_completion_tokens += static_cast<double>(l.completion_tokens);
    s.avg_wall_time_s += l.wall_time_s;
    s.total_cost += l.monetary_cost;
  }
  const double n = static_cast<double>(s.cases);
  s.avg_experts /= n;
  s.avg_calls /= n;
  s.avg_prompt_tokens /= n;
  s.avg_completion_tokens /= n;
  s.avg_wall_time_s /= n;
  return s;
}

// --- enum helpers ------------------------------------------------------------

std::string to_string(Modality m) {
  return m == Modality::text_only ? "text_only" : "text_with_image";
}

std::string to_string(EdgeKind k) { return k == EdgeKind::peer ? "peer" : "directed"; }

std::string to_string(Speaker s) {
  switch (s) {
    case Speaker::system: return "system";
    case Speaker::user: return "user";
    case Speaker::agent: return "agent";
    case Speaker::moderator: return "moderator";
  }
  return "user";
}

std::string to_string(VerdictStrategy s) {
  switch (s) {
    case VerdictStrategy::majority_vote: return "majority_vote";
    case VerdictStrategy::ensemble_refinement: return "ensemble_refinement";
    case VerdictStrategy::single: return "single";
  }
  return "majority_vote";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kamac: return "kamac";
    case Method::single: return "single";
    case Method::cot: return "cot";
    case Method::static_majority: return "majority";
    case Method::static_consensus: return "consensus";
  }
  return "kamac";
}

Method method_from_string(const std::string& s) {
  if (s == "kamac") return Method::kamac;
  if (s == "single") return Method::single;
  if (s == "cot") return Method::cot;
  if (s == "majority" || s == "static_majority") return Method::static_majority;
  if (s == "consensus" || s == "static_consensus") return Method::static_consensus;
  throw InputError("unknown method: " + s);
}

// --- json --------------------------------------------------------------------

void to_json(nlohmann::json& j, const Box3D& b) {
  j = {{"z_min", b.z_min}, {"z_max", b.z_max}, {"y_min", b.y_min},
       {"y_max", b.y_max}, {"x_min", b.x_min}, {"x_max", b.x_max}};
}

void from_json(const nlohmann::json& j, Box3D& b) {
  j.at("z_min").get_to(b.z_min);
  j.at("z_max").get_to(b.z_max);
  j.at("y_min").get_to(b.y_min);
  j.at("y_max").get_to(b.y_max);
  j.at("x_min").get_to(b.x_min);
  j.at("x_max").get_to(b.x_max);
}

void to_json(nlohmann::json& j, const HierarchyEdge& e) {
  j = {{"kind", to_string(e.kind)}, {"from", e.from_role}, {"to", e.to_role}};
}

void from_json(const nlohmann::json& j, HierarchyEdge& e) {
  const std::string kind = j.at("kind").get<std::string>();
  e.kind = kind == "peer" ? EdgeKind::peer : EdgeKind::directed;
  j.at("from").get_to(e.from_role);
  j.at("to").get_to(e.to_role);
  if (e.kind == EdgeKind::peer) e = HierarchyEdge::peer(e.from_role, e.to_role);
}

void to_json(nlohmann::json& j, const ExpertSpec& e) {
  j = {{"role", e.role},
       {"scope", e.scope},
       {"edges", e.edges},
       {"recruited_round", e.recruited_round}};
}

void from_json(const nlohmann::json& j, ExpertSpec& e) {
  j.at("role").get_to(e.role);
  j.at("scope").get_to(e.scope);
  j.at("edges").get_to(e.edges);
  j.at("recruited_round").get_to(e.recruited_round);
}

void to_json(nlohmann::json& j, const Message& m) {
  j = {{"speaker", to_string(m.speaker)}, {"round", m.round}, {"content", m.content}};
  if (!m.agent_role.empty()) j["role"] = m.agent_role;
}

void from_json(const nlohmann::json& j, Message& m) {
  const std::string sp = j.at("speaker").get<std::string>();
  if (sp == "system") m.speaker = Speaker::system;
  else if (sp == "user") m.speaker = Speaker::user;
  else if (sp == "agent") m.speaker = Speaker::agent;
  else if (sp == "moderator") m.speaker = Speaker::moderator;
  else throw InputError("Message: unknown speaker '" + sp + "'");
  j.at("round").get_to(m.round);
  j.at("content").get_to(m.content);
  m.agent_role = j.value("role", "");
}

void to_json(nlohmann::json& j, const Verdict& v) {
  j = {{"label", v.label},
       {"strategy", to_string(v.strategy)},
       {"per_agent", v.per_agent},
       {"tally", v.tally},
       {"moderator_text", v.moderator_text}};
}

void from_json(const nlohmann::json& j, Verdict& v) {
  j.at("label").get_to(v.label);
  const std::string st = j.at("strategy").get<std::string>();
  if (st == "majority_vote") v.strategy = VerdictStrategy::majority_vote;
  else if (st == "ensemble_refinement") v.strategy = VerdictStrategy::ensemble_refinement;
  else if (st == "single") v.strategy = VerdictStrategy::single;
  else throw InputError("Verdict: unknown strategy '" + st + "'");
  j.at("per_agent").get_to(v.per_agent);
  j.at("tally").get_to(v.tally);
  j.at("moderator_text").get_to(v.moderator_text);
}

void to_json(nlohmann::json& j, const UsageLedger& l) {
  j = {{"case_id", l.case_id},
       {"expert_count", l.expert_count},
       {"backend_calls", l.backend_calls},
       {"prompt_tokens", l.prompt_tokens},
       {"completion_tokens", l.completion_tokens},
       {"wall_time_s", l.wall_time_s},
       {"monetary_cost", l.monetary_cost}};
}

void from_json(const nlohmann::json& j, UsageLedger& l) {
  j.at("case_id").get_to(l.case_id);
  j.at("expert_count").get_to(l.expert_count);
  j.at("backend_calls").get_to(l.backend_calls);
  j.at("prompt_tokens").get_to(l.prompt_tokens);
  j.at("completion_tokens").get_to(l.completion_tokens);
  j.at("wall_time_s").get_to(l.wall_time_s);
  j.at("monetary_cost").get_to(l.monetary_cost);
}

void to_json(nlohmann::json& j, const RosterEvent& e) {
  j = {{"round", e.round}, {"roles", e.roles}};
}

void from_json(const nlohmann::json& j, RosterEvent& e) {
  j.at("round").get_to(e.round);
  j.at("roles").get_to(e.roles);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"model_id", c.model_id},
       {"temperature", c.temperature},
       {"max_rounds_R", c.max_rounds_R},
       {"initial_experts_N", c.initial_experts_N},
       {"consensus_strategy",
        c.consensus_strategy == ConsensusStrategy::majority_vote ? "majority_vote"
                                                                 : "ensemble_refinement"},
       {"method", to_string(c.method)},
       {"static_team_size", c.static_team_size},
       {"prompt_variant", c.prompt_variant == PromptVariant::medqa ? "medqa" : "progn_strict"},
       {"max_new_per_round", c.max_new_per_round},
       {"recruitment_enabled", c.recruitment_enabled}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  j.at("model_id").get_to(c.model_id);
  j.at("temperature").get_to(c.temperature);
  j.at("max_rounds_R").get_to(c.max_rounds_R);
  j.at("initial_experts_N").get_to(c.initial_experts_N);
  c.consensus_strategy = j.at("consensus_strategy").get<std::string>() == "majority_vote"
                             ? ConsensusStrategy::majority_vote
                             : ConsensusStrategy::ensemble_refinement;
  c.method = method_from_string(j.at("method").get<std::string>());
  j.at("static_team_size").get_to(c.static_team_size);
  c.prompt_variant = j.at("prompt_variant").get<std::string>() == "medqa"
                         ? PromptVariant::medqa
                         : PromptVariant::progn_strict;
  j.at("max_new_per_round").get_to(c.max_new_per_round);
  j.at("recruitment_enabled").get_to(c.recruitment_enabled);
}

}  // namespace kamac
