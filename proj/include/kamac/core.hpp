#pragma once
// Core domain types shared across the engine: cases, experts, discussion
// state, verdicts, run configuration, and usage accounting. These are value
// objects; construction and validation only, no orchestration logic.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kamac {

// Base for every error thrown by the engine.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct GatewayError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};

// Sentinel label recorded when an agent (or a whole case) produced no
// parseable answer. Scored as incorrect, never dropped.
inline const std::string kAbstainLabel = "∅";  // "∅"

// Trim, collapse internal whitespace to single spaces, ASCII case-fold.
// Parenthetical qualifiers are kept verbatim (modulo casing).
// Throws ValidationError if nothing remains.
std::string normalize_role(const std::string& raw);

// Trim + collapse whitespace, casing preserved. Display form of a role.
std::string collapse_whitespace(const std::string& raw);

struct Box3D {
  double z_min = 0, z_max = 0;
  double y_min = 0, y_max = 0;
  double x_min = 0, x_max = 0;

  void validate() const;  // each min <= max, all in [0,1]
};

enum class Modality { text_only, text_with_image };

struct CaseRecord {
  std::string case_id;
  std::string stem;
  // label -> option text, insertion order preserved; labels are single
  // uppercase letters.
  std::vector<std::pair<std::string, std::string>> options;
  std::string gold_label;
  Modality modality = Modality::text_only;
  std::vector<std::pair<std::string, std::string>> clinical_vars;
  std::string image_ref;  // empty = none; forwarded opaquely
  std::vector<Box3D> roi_boxes;
  std::string fewshot_examplers;

  void validate() const;
  std::vector<std::string> labels() const;
  bool has_label(const std::string& label) const;
};

enum class EdgeKind { peer, directed };

struct HierarchyEdge {
  EdgeKind kind = EdgeKind::peer;
  std::string from_role;
  std::string to_role;

  // Peer edges are stored with from <= to under normalized ordering.
  static HierarchyEdge peer(const std::string& a, const std::string& b);
  static HierarchyEdge directed(const std::string& from, const std::string& to);

  bool operator==(const HierarchyEdge&) const = default;
};

struct ExpertSpec {
  std::string role;   // display form (trimmed, whitespace-collapsed)
  std::string scope;  // one-sentence description
  std::vector<HierarchyEdge> edges;
  int recruited_round = 0;  // 0 = initial, >0 = recruited at that round

  std::string normalized() const { return normalize_role(role); }
};

enum class Speaker { system, user, agent, moderator };

struct Message {
  Speaker speaker = Speaker::user;
  std::string agent_role;  // set when speaker == agent
  int round = 0;           // 0 = initial consultation
  std::string content;
};

struct OpinionEntry {
  std::string role;
  std::string text;
  int round = 0;
};

// Ordered feedback accumulated during discussion. At most one entry per
// role per round; insertion order preserved.
struct OpinionBoard {
  std::vector<OpinionEntry> entries;

  void add(const std::string& role, const std::string& text, int round);
  void clear() { entries.clear(); }
  bool empty() const { return entries.empty(); }
  std::string render() const;
};

enum class ConsensusStrategy { majority_vote, ensemble_refinement };
enum class VerdictStrategy { majority_vote, ensemble_refinement, single };

struct Verdict {
  std::string label;  // option label or kAbstainLabel
  VerdictStrategy strategy = VerdictStrategy::majority_vote;
  std::vector<std::pair<std::string, std::string>> per_agent;  // role -> label
  std::map<std::string, int> tally;
  std::string moderator_text;
};

struct DiscussionState {
  int round_r = 1;
  std::vector<ExpertSpec> roster;
  bool consensus = false;
  bool kg = false;
  OpinionBoard board;
  std::map<std::string, std::vector<Message>> histories;  // normalized role

  bool has_role(const std::string& normalized_role) const;
};

enum class Method { kamac, single, cot, static_majority, static_consensus };
enum class PromptVariant { medqa, progn_strict };

struct RetryPolicy {
  int max_attempts = 3;
  std::vector<double> backoff_s = {0.5, 1.0};
};

// Per 1M tokens. Defaults to zero (unknown pricing).
struct PriceTable {
  double prompt_per_mtok = 0.0;
  double completion_per_mtok = 0.0;
};

struct RunConfig {
  std::string model_id = "gpt-4.1-mini";
  double temperature = 0.0;
  int max_rounds_R = 3;
  int initial_experts_N = 1;
  ConsensusStrategy consensus_strategy = ConsensusStrategy::majority_vote;
  Method method = Method::kamac;
  int static_team_size = 5;
  std::string cache_dir;
  int concurrency_limit = 1;
  RetryPolicy retry_policy;
  PromptVariant prompt_variant = PromptVariant::medqa;
  PriceTable prices;
  // Bounds runaway recruitment; slack relative to reported team sizes.
  int max_new_per_round = 3;
  // When off, a detected knowledge gap ends the discussion early instead
  // of triggering recruitment.
  bool recruitment_enabled = true;

  void validate() const;
};

struct UsageLedger {
  std::string case_id;
  int expert_count = 0;
  long backend_calls = 0;  // logical chat invocations for this case
  long prompt_tokens = 0;
  long completion_tokens = 0;
  double wall_time_s = 0.0;
  double monetary_cost = 0.0;
};

struct LedgerSummary {
  int cases = 0;
  double avg_experts = 0;
  double avg_calls = 0;
  double avg_prompt_tokens = 0;
  double avg_completion_tokens = 0;
  double avg_wall_time_s = 0;
  double total_cost = 0;
};

// Arithmetic means over cases, sum of cost. Throws InputError on empty input.
LedgerSummary ledger_merge(const std::vector<UsageLedger>& ledgers);

// Roster change at a given round (round 0 = initial recruitment).
struct RosterEvent {
  int round = 0;
  std::vector<std::string> roles;
};

// --- enum <-> string helpers -------------------------------------------------

std::string to_string(Modality m);
std::string to_string(EdgeKind k);
std::string to_string(Speaker s);
std::string to_string(VerdictStrategy s);
std::string to_string(Method m);
Method method_from_string(const std::string& s);

// --- json serialization ------------------------------------------------------

void to_json(nlohmann::json& j, const Box3D& b);
void from_json(const nlohmann::json& j, Box3D& b);
void to_json(nlohmann::json& j, const HierarchyEdge& e);
void from_json(const nlohmann::json& j, HierarchyEdge& e);
void to_json(nlohmann::json& j, const ExpertSpec& e);
void from_json(const nlohmann::json& j, ExpertSpec& e);
void to_json(nlohmann::json& j, const Message& m);
void from_json(const nlohmann::json& j, Message& m);
void to_json(nlohmann::json& j, const Verdict& v);
void from_json(const nlohmann::json& j, Verdict& v);
void to_json(nlohmann::json& j, const UsageLedger& l);
void from_json(const nlohmann::json& j, UsageLedger& l);
void to_json(nlohmann::json& j, const RosterEvent& e);
void from_json(const nlohmann::json& j, RosterEvent& e);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

}  // namespace kamac
