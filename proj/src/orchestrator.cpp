#include "kamac/orchestrator.hpp"

#include <algorithm>

#include "kamac/prompts.hpp"

namespace kamac {

namespace {

std::string visual_cot_binding(const CaseRecord& c) {
  if (c.roi_boxes.empty()) return "";
  auto rendered =
      render(TemplateId::VisualCoT, {{"bbox_coords", render_bbox_coords(c.roi_boxes)}});
  return rendered.user_text + "\n\n";
}

TemplateId recruitment_template(PromptVariant variant) {
  return variant == PromptVariant::medqa ? TemplateId::P1 : TemplateId::P1_strict;
}

}  // namespace

Orchestrator::Orchestrator(RunConfig config, ChatBackend& gateway)
    : config_(std::move(config)), gateway_(gateway) {
  config_.validate();
}

CaseRunResult Orchestrator::run(const CaseRecord& c) {
  c.validate();
  switch (config_.method) {
    case Method::kamac: return run_kamac(c);
    case Method::single: return run_single(c, false);
    case Method::cot: return run_single(c, true);
    case Method::static_majority: return run_static(c, false);
    case Method::static_consensus: return run_static(c, true);
  }
  throw InputError("unknown method");
}

ChatReply Orchestrator::call(Ctx& ctx, Phase phase, int round,
                             const std::string& role_tag,
                             const std::vector<Message>& messages, size_t new_messages,
                             bool attach_image) {
  ChatRequest req;
  req.model_id = config_.model_id;
  req.temperature = config_.temperature;
  req.messages = messages;
  if (attach_image && !ctx.c.image_ref.empty()) req.attachments.push_back(ctx.c.image_ref);
  req.tag = {ctx.c.case_id, role_tag, phase, round, ctx.seq++};

  ChatReply reply = gateway_.chat(req);

  auto& ledger = ctx.result.ledger;
  ledger.backend_calls += 1;
  ledger.prompt_tokens += reply.prompt_tokens;
  ledger.completion_tokens += reply.completion_tokens;
  ledger.wall_time_s += reply.latency_s;

  for (size_t i = messages.size() - new_messages; i < messages.size(); ++i)
    ctx.result.transcript.push_back(messages[i]);
  Message out;
  out.speaker = phase == Phase::moderate ? Speaker::moderator : Speaker::agent;
  out.agent_role = role_tag;
  out.round = round;
  out.content = reply.content;
  ctx.result.transcript.push_back(out);
  return reply;
}

ChatReply Orchestrator::agent_call(Ctx& ctx, ExpertSpec& expert, Phase phase, int round,
                                   const std::string& user_text, bool attach_image) {
  auto& history = ctx.state.histories[expert.normalized()];
  if (history.empty()) {
    Message sys;
    sys.speaker = Speaker::system;
    sys.round = round;
    sys.content = render_role_system(expert);
    history.push_back(sys);
  }
  Message user;
  user.speaker = Speaker::user;
  user.round = round;
  user.content = user_text;
  history.push_back(user);

  // The system message is part of the transcript only on first contact.
  const size_t new_messages = history.size() == 2 ? 2 : 1;
  ChatReply reply =
      call(ctx, phase, round, expert.normalized(), history, new_messages, attach_image);

  Message agent;
  agent.speaker = Speaker::agent;
  agent.agent_role = expert.role;
  agent.round = round;
  agent.content = reply.content;
  history.push_back(agent);
  return reply;
}

std::vector<ExpertSpec> Orchestrator::recruit_roster(Ctx& ctx, Phase phase, int round,
                                                     int want, bool strict_count) {
  (void)strict_count;
  auto rendered = render(recruitment_template(config_.prompt_variant),
                         {{"question", question_}, {"num_agents", std::to_string(want)}});
  std::vector<Message> messages;
  messages.push_back({Speaker::system, "", round, *rendered.system_text});
  messages.push_back({Speaker::user, "", round, rendered.user_text});

  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatReply reply = call(ctx, phase, round, "", messages, attempt == 0 ? 2 : 1);
    try {
      RosterParse parsed = parse_roster(reply.content);
      for (const auto& w : parsed.warnings) ctx.result.warnings.push_back(w);
      if (!parsed.skipped && !parsed.experts.empty()) {
        auto experts = std::move(parsed.experts);
        if (static_cast<int>(experts.size()) > want) {
          ctx.result.warnings.push_back("recruiter returned " +
                                        std::to_string(experts.size()) + " experts, keeping " +
                                        std::to_string(want));
          experts.resize(static_cast<size_t>(want));
        } else if (static_cast<int>(experts.size()) < want) {
          ctx.result.warnings.push_back("recruiter returned only " +
                                        std::to_string(experts.size()) + " of " +
                                        std::to_string(want) + " experts");
        }
        return experts;
      }
    } catch (const ParseError&) {
      // fall through to the re-ask
    }
    Message agent{Speaker::agent, "recruiter", round, reply.content};
    messages.push_back(agent);
    messages.push_back({Speaker::user, "", round,
                        "Your previous answer could not be parsed. Please answer strictly "
                        "in the requested numbered format."});
  }
  throw Error("recruitment failed: no parseable roster after re-ask");
}

void Orchestrator::initial_assessment(Ctx& ctx) {
  for (auto& expert : ctx.state.roster) {
    auto rendered = render(TemplateId::P2, {{"role", expert.role},
                                            {"description", expert.scope},
                                            {"visual_cot", visual_cot_binding(ctx.c)},
                                            {"fewshot_examplers", ctx.c.fewshot_examplers},
                                            {"question", question_},
                                            {"answer_template", kAnswerTemplate}});
    ChatReply reply = agent_call(ctx, expert, Phase::assess, 0, rendered.user_text,
                                 /*attach_image=*/true);
    ctx.state.board.add(expert.role, reply.content, 0);
  }
}

void Orchestrator::onboard_expert(Ctx& ctx, ExpertSpec& expert, int round) {
  // Recruits see the discussion so far as contextual examples.
  auto rendered = render(TemplateId::P2, {{"role", expert.role},
                                          {"description", expert.scope},
                                          {"visual_cot", visual_cot_binding(ctx.c)},
                                          {"fewshot_examplers", ctx.state.board.render()},
                                          {"question", question_},
                                          {"answer_template", kAnswerTemplate}});
  ChatReply reply = agent_call(ctx, expert, Phase::assess, round, rendered.user_text,
                               /*attach_image=*/true);
  ctx.state.board.add(expert.role, reply.content, round);
}

bool Orchestrator::discussion_round(Ctx& ctx, std::vector<ExpertSpec>& members, int round) {
  bool all_done = true;
  for (auto& expert : members) {
    auto rendered =
        render(TemplateId::P3, {{"assessment", ctx.state.board.render()}});
    ChatReply reply = agent_call(ctx, expert, Phase::interact, round, rendered.user_text);
    ConsensusSignal sig = parse_consensus(reply.content);
    for (const auto& w : sig.warnings) ctx.result.warnings.push_back(w);
    if (sig.wants_more_talk) all_done = false;
    ctx.state.board.add(expert.role, reply.content, round);
  }
  return all_done;
}

KgSignal Orchestrator::detect_knowledge_gap(Ctx& ctx, int round) {
  KgSignal aggregate;
  const std::string agents = render_roster(ctx.state.roster);
  std::vector<std::string> seen;
  for (auto& expert : ctx.state.roster) {
    auto rendered = render(TemplateId::P4, {{"agents", agents}});
    ChatReply reply = agent_call(ctx, expert, Phase::kg_detect, round, rendered.user_text);
    KgSignal sig = parse_yes_no(reply.content);
    for (const auto& w : sig.warnings) ctx.result.warnings.push_back(w);
    if (sig.gap) {
      aggregate.gap = true;
      if (aggregate.reason.empty()) aggregate.reason = sig.reason;
      for (const auto& role : sig.requested_roles) {
        const std::string norm = normalize_role(role);
        if (std::find(seen.begin(), seen.end(), norm) == seen.end()) {
          seen.push_back(norm);
          aggregate.requested_roles.push_back(role);
        }
      }
    }
  }
  return aggregate;
}

std::vector<ExpertSpec> Orchestrator::recruit_additional(Ctx& ctx, int round) {
  auto rendered =
      render(TemplateId::P5, {{"agents", render_roster(ctx.state.roster)}});
  std::vector<Message> messages;
  messages.push_back({Speaker::user, "", round,
                      "Question: " + question_ + "\n\nDiscussion so far:\n\n" +
                          ctx.state.board.render() + "\n\n" + rendered.user_text});
  ChatReply reply = call(ctx, Phase::recruit_more, round, "", messages, 1);

  RosterParse parsed;
  try {
    parsed = parse_roster(reply.content);
  } catch (const ParseError&) {
    ctx.result.warnings.push_back("recruitment reply unparseable; treating as skip");
    return {};
  }
  for (const auto& w : parsed.warnings) ctx.result.warnings.push_back(w);
  if (parsed.skipped) return {};

  std::vector<ExpertSpec> fresh;
  for (auto& e : parsed.experts) {
    if (ctx.state.has_role(e.normalized())) {
      ctx.result.warnings.push_back("dropped already-recruited role: '" + e.role + "'");
      continue;
    }
    e.recruited_round = round;
    fresh.push_back(std::move(e));
    if (static_cast<int>(fresh.size()) == config_.max_new_per_round) break;
  }
  return fresh;
}

void Orchestrator::record_answer(Ctx& ctx, const ExpertSpec& expert,
                                 const std::string& reply) {
  std::string label;
  try {
    label = parse_final_answer(reply, ctx.c.labels());
  } catch (const ParseError&) {
    label = kAbstainLabel;
    ctx.result.warnings.push_back("abstention: no parseable answer from '" + expert.role +
                                  "'");
  }
  ctx.latest_answers.emplace_back(expert.role, label);
}

void Orchestrator::update_opinions(Ctx& ctx, int round) {
  ctx.state.board.clear();
  ctx.latest_answers.clear();
  for (auto& expert : ctx.state.roster) {
    auto rendered = render(TemplateId::P6, {{"question", question_},
                                            {"answer_template", kAnswerTemplate},
                                            {"final_answer_template", kFinalAnswerTemplate}});
    ChatReply reply = agent_call(ctx, expert, Phase::update, round, rendered.user_text);
    record_answer(ctx, expert, reply.content);
    ctx.state.board.add(expert.role, reply.content, round);
  }
}

void Orchestrator::finalize(Ctx& ctx, int round) {
  Verdict v;
  v.per_agent = ctx.latest_answers;
  for (const auto& [role, label] : ctx.latest_answers) ++v.tally[label];

  // Mechanical majority with roster-order tie-break (earliest recruit wins).
  std::string mechanical = kAbstainLabel;
  int best = 0;
  for (const auto& [label, count] : v.tally)
    if (label != kAbstainLabel && count > best) best = count;
  if (best > 0) {
    for (const auto& [role, label] : ctx.latest_answers) {
      if (label != kAbstainLabel && v.tally[label] == best) {
        mechanical = label;
        break;
      }
    }
  }

  auto rendered = render(TemplateId::P7, {{"question", question_},
                                          {"final_answer_template", kFinalAnswerTemplate}});
  std::vector<Message> messages;
  messages.push_back({Speaker::system, "", round, *rendered.system_text});
  messages.push_back({Speaker::user, "", round,
                      "Final answers from the expert team:\n\n" +
                          ctx.state.board.render() + "\n\n" + rendered.user_text});
  ChatReply reply = call(ctx, Phase::moderate, round, "moderator", messages, 2);
  v.moderator_text = reply.content;

  if (config_.consensus_strategy == ConsensusStrategy::majority_vote) {
    // The moderator reply is stored for transcript fidelity, not trusted.
    v.strategy = VerdictStrategy::majority_vote;
    v.label = mechanical;
  } else {
    v.strategy = VerdictStrategy::ensemble_refinement;
    try {
      v.label = parse_final_answer(reply.content, ctx.c.labels());
    } catch (const ParseError&) {
      ctx.result.warnings.push_back("moderator reply unparseable; abstaining");
      v.label = kAbstainLabel;
    }
  }
  ctx.result.verdict = std::move(v);
}

CaseRunResult Orchestrator::run_kamac(const CaseRecord& c) {
  Ctx ctx{c};
  ctx.result.ledger.case_id = c.case_id;
  question_ = render_question(c);
  try {
    ctx.state.roster = recruit_roster(ctx, Phase::recruit_initial, 0,
                                      config_.initial_experts_N,
                                      config_.prompt_variant == PromptVariant::progn_strict);
    {
      RosterEvent ev{0, {}};
      for (const auto& e : ctx.state.roster) ev.roles.push_back(e.role);
      ctx.result.roster_timeline.push_back(ev);
    }
    initial_assessment(ctx);

    int r = 1;
    while (r <= config_.max_rounds_R && !ctx.state.consensus && !ctx.state.kg) {
      ctx.state.round_r = r;
      ctx.state.consensus = discussion_round(ctx, ctx.state.roster, r);
      KgSignal gap = detect_knowledge_gap(ctx, r);
      if (gap.gap) {
        if (config_.recruitment_enabled) {
          std::vector<ExpertSpec> fresh = recruit_additional(ctx, r);
          if (!fresh.empty()) {
            for (auto& e : fresh) onboard_expert(ctx, e, r);
            // Consensus now reflects only the new experts' exchange.
            ctx.state.consensus = discussion_round(ctx, fresh, r);
            RosterEvent ev{r, {}};
            for (const auto& e : fresh) ev.roles.push_back(e.role);
            ctx.result.roster_timeline.push_back(ev);
            for (auto& e : fresh) ctx.state.roster.push_back(std::move(e));
          }
          ctx.state.kg = false;
        } else {
          // Recruitment disabled: a detected gap ends the discussion early.
          ctx.state.kg = true;
        }
      }
      update_opinions(ctx, r);
      ctx.result.rounds_used = r;
      ++r;
    }
    ctx.result.consensus_reached = ctx.state.consensus;
    finalize(ctx, ctx.result.rounds_used);
  } catch (const Error& e) {
    ctx.result.failed = true;
    ctx.result.failure = e.what();
    ctx.result.verdict.label = kAbstainLabel;
  }
  ctx.result.ledger.expert_count = std::max<int>(1, static_cast<int>(ctx.state.roster.size()));
  ctx.result.ledger.monetary_cost =
      static_cast<double>(ctx.result.ledger.prompt_tokens) / 1e6 * config_.prices.prompt_per_mtok +
      static_cast<double>(ctx.result.ledger.completion_tokens) / 1e6 *
          config_.prices.completion_per_mtok;
  return ctx.result;
}

CaseRunResult Orchestrator::run_single(const CaseRecord& c, bool chain_of_thought) {
  Ctx ctx{c};
  ctx.result.ledger.case_id = c.case_id;
  question_ = render_question(c);
  try {
    std::string user = visual_cot_binding(c);
    if (chain_of_thought) user += "Let's think step by step.\n\n";
    user += "Please return your answer to the medical query among the options provided.\n\n";
    if (!c.fewshot_examplers.empty()) user += c.fewshot_examplers + "\n\n";
    user += "Question: " + question_ +
            "\n\nYour answer should be in the format below.\n\n" + kAnswerTemplate;

    std::vector<Message> messages;
    messages.push_back({Speaker::user, "", 0, user});
    ChatReply reply = call(ctx, Phase::assess, 0, "single", messages, 1,
                           /*attach_image=*/true);

    Verdict v;
    v.strategy = VerdictStrategy::single;
    try {
      v.label = parse_final_answer(reply.content, c.labels());
    } catch (const ParseError&) {
      ctx.result.warnings.push_back("abstention: no parseable answer");
      v.label = kAbstainLabel;
    }
    v.per_agent = {{"single", v.label}};
    v.tally[v.label] = 1;
    v.moderator_text = reply.content;
    ctx.result.verdict = std::move(v);
  } catch (const Error& e) {
    ctx.result.failed = true;
    ctx.result.failure = e.what();
    ctx.result.verdict.label = kAbstainLabel;
  }
  ctx.result.ledger.expert_count = 1;
  ctx.result.ledger.monetary_cost =
      static_cast<double>(ctx.result.ledger.prompt_tokens) / 1e6 * config_.prices.prompt_per_mtok +
      static_cast<double>(ctx.result.ledger.completion_tokens) / 1e6 *
          config_.prices.completion_per_mtok;
  return ctx.result;
}

CaseRunResult Orchestrator::run_static(const CaseRecord& c, bool with_discussion) {
  Ctx ctx{c};
  ctx.result.ledger.case_id = c.case_id;
  question_ = render_question(c);
  try {
    ctx.state.roster = recruit_roster(ctx, Phase::recruit_initial, 0, config_.static_team_size,
                                      true);
    {
      RosterEvent ev{0, {}};
      for (const auto& e : ctx.state.roster) ev.roles.push_back(e.role);
      ctx.result.roster_timeline.push_back(ev);
    }
    initial_assessment(ctx);

    if (!with_discussion) {
      // Independent experts, mechanical majority, no moderator.
      for (auto& expert : ctx.state.roster) {
        const auto& entries = ctx.state.board.entries;
        auto it = std::find_if(entries.begin(), entries.end(), [&](const OpinionEntry& e) {
          return normalize_role(e.role) == expert.normalized();
        });
        record_answer(ctx, expert, it == entries.end() ? "" : it->text);
      }
      Verdict v;
      v.strategy = VerdictStrategy::majority_vote;
      v.per_agent = ctx.latest_answers;
      for (const auto& [role, label] : ctx.latest_answers) ++v.tally[label];
      std::string winner = kAbstainLabel;
      int best = 0;
      for (const auto& [label, count] : v.tally)
        if (label != kAbstainLabel && count > best) best = count;
      if (best > 0) {
        for (const auto& [role, label] : ctx.latest_answers)
          if (label != kAbstainLabel && v.tally[label] == best) {
            winner = label;
            break;
          }
      }
      v.label = winner;
      ctx.result.verdict = std::move(v);
    } else {
      int r = 1;
      while (r <= config_.max_rounds_R && !ctx.state.consensus) {
        ctx.state.round_r = r;
        ctx.state.consensus = discussion_round(ctx, ctx.state.roster, r);
        update_opinions(ctx, r);
        ctx.result.rounds_used = r;
        ++r;
      }
      ctx.result.consensus_reached = ctx.state.consensus;
      finalize(ctx, ctx.result.rounds_used);
    }
  } catch (const Error& e) {
    ctx.result.failed = true;
    ctx.result.failure = e.what();
    ctx.result.verdict.label = kAbstainLabel;
  }
  ctx.result.ledger.expert_count = std::max<int>(1, static_cast<int>(ctx.state.roster.size()));
  ctx.result.ledger.monetary_cost =
      static_cast<double>(ctx.result.ledger.prompt_tokens) / 1e6 * config_.prices.prompt_per_mtok +
      static_cast<double>(ctx.result.ledger.completion_tokens) / 1e6 *
          config_.prices.completion_per_mtok;
  return ctx.result;
}

CaseRunResult run_case(const CaseRecord& c, const RunConfig& config, ChatBackend& gateway) {
  Orchestrator orch(config, gateway);
  return orch.run(c);
}

long max_backend_calls(const RunConfig& config) {
  const long cap = config.max_new_per_round;
  const long n = config.initial_experts_N;
  const long r = config.max_rounds_R;
  const long max_roster = n + r * cap;
  // P1 (+ one re-ask) + N initial assessments + per round: interact/kg/update
  // for the full roster, one recruitment call, P2+P3 per recruit + moderator.
  return 2 + n + r * (3 * max_roster + 1 + 2 * cap) + 1;
}

}  // namespace kamac
