#pragma once
// Executes the adaptive collaboration loop: initial consultation,
// knowledge-driven discussion with dynamic recruitment, final decision.
// Also hosts the four baseline strategies.

#include <string>
#include <vector>

#include "kamac/core.hpp"
#include "kamac/gateway.hpp"
#include "kamac/parsing.hpp"

namespace kamac {

struct CaseRunResult {
  Verdict verdict;
  UsageLedger ledger;
  std::vector<Message> transcript;
  std::vector<RosterEvent> roster_timeline;
  int rounds_used = 0;
  bool consensus_reached = false;
  std::vector<std::string> warnings;
  bool failed = false;
  std::string failure;
};

class Orchestrator {
 public:
  // The gateway should already be wrapped with retries/caching as desired;
  // all calls for one case are strictly sequential.
  Orchestrator(RunConfig config, ChatBackend& gateway);

  CaseRunResult run(const CaseRecord& c);

 private:
  struct Ctx {
    const CaseRecord& c;
    CaseRunResult result;
    DiscussionState state;
    // role (normalized) -> latest parsed answer label or abstention
    std::vector<std::pair<std::string, std::string>> latest_answers;
    int seq = 0;
  };

  CaseRunResult run_kamac(const CaseRecord& c);
  CaseRunResult run_single(const CaseRecord& c, bool chain_of_thought);
  CaseRunResult run_static(const CaseRecord& c, bool with_discussion);

  ChatReply call(Ctx& ctx, Phase phase, int round, const std::string& role_tag,
                 const std::vector<Message>& messages, size_t new_messages,
                 bool attach_image = false);
  ChatReply agent_call(Ctx& ctx, ExpertSpec& expert, Phase phase, int round,
                       const std::string& user_text, bool attach_image = false);

  std::vector<ExpertSpec> recruit_roster(Ctx& ctx, Phase phase, int round, int want,
                                         bool strict_count);
  void initial_assessment(Ctx& ctx);
  void onboard_expert(Ctx& ctx, ExpertSpec& expert, int round);
  bool discussion_round(Ctx& ctx, std::vector<ExpertSpec>& members, int round);
  KgSignal detect_knowledge_gap(Ctx& ctx, int round);
  std::vector<ExpertSpec> recruit_additional(Ctx& ctx, int round);
  void update_opinions(Ctx& ctx, int round);
  void finalize(Ctx& ctx, int round);
  void record_answer(Ctx& ctx, const ExpertSpec& expert, const std::string& reply);

  std::string question_;
  RunConfig config_;
  ChatBackend& gateway_;
};

// Convenience wrapper used by the CLI and tests.
CaseRunResult run_case(const CaseRecord& c, const RunConfig& config, ChatBackend& gateway);

// Closed-form upper bound on backend calls for one case, used by the
// termination property tests: initial recruitment (with one re-ask), initial
// assessments, per-round interaction/gap/update plus recruitment overhead,
// and the moderator call.
long max_backend_calls(const RunConfig& config);

}  // namespace kamac
