#include "kamac/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

// httplib pulls in OpenSSL when available; the remote backend requires TLS
// for https URLs but plain http is allowed for self-hosted servers.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace kamac {

std::string to_string(Phase p) {
  switch (p) {
    case Phase::recruit_initial: return "recruit_initial";
    case Phase::assess: return "assess";
    case Phase::interact: return "interact";
    case Phase::kg_detect: return "kg_detect";
    case Phase::recruit_more: return "recruit_more";
    case Phase::update: return "update";
    case Phase::moderate: return "moderate";
  }
  return "assess";
}

Phase phase_from_string(const std::string& s) {
  for (Phase p : {Phase::recruit_initial, Phase::assess, Phase::interact,
                  Phase::kg_detect, Phase::recruit_more, Phase::update,
                  Phase::moderate})
    if (to_string(p) == s) return p;
  throw InputError("unknown phase: " + s);
}

void ChatRequest::validate() const {
  if (messages.empty()) throw ValidationError("ChatRequest: no messages");
  for (size_t i = 1; i < messages.size(); ++i)
    if (messages[i].speaker == Speaker::system)
      throw ValidationError("ChatRequest: system message not first");
}

std::string request_digest(const ChatRequest& req) {
  // FNV-1a 64-bit over speaker+content of every message.
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0x1f;
    h *= 1099511628211ull;
  };
  for (const auto& m : req.messages) {
    mix(to_string(m.speaker));
    mix(m.content);
  }
  for (const auto& a : req.attachments) mix(a);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- scripted backend --------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries)
    : entries_(std::move(entries)) {
  for (auto& e : entries_)
    if (e.role) e.role = normalize_role(*e.role);
}

std::vector<ScriptEntry> ScriptedBackend::entries_from_json(const nlohmann::json& j) {
  std::vector<ScriptEntry> entries;
  for (const auto& item : j) {
    ScriptEntry e;
    if (item.contains("phase")) e.phase = phase_from_string(item.at("phase").get<std::string>());
    if (item.contains("round")) e.round = item.at("round").get<int>();
    if (item.contains("role")) e.role = normalize_role(item.at("role").get<std::string>());
    e.content = item.at("content").get<std::string>();
    e.times = item.value("times", 1);
    e.fail_first = item.value("fail_first", 0);
    entries.push_back(std::move(e));
  }
  return entries;
}

ScriptedBackend ScriptedBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open script file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed script file " + path + ": " + e.what());
  }
  return ScriptedBackend(entries_from_json(j));
}

ChatReply ScriptedBackend::chat(const ChatRequest& request) {
  request.validate();
  std::lock_guard<std::mutex> lock(mutex_);
  calls_.fetch_add(1);
  for (auto& e : entries_) {
    if (e.phase && *e.phase != request.tag.phase) continue;
    if (e.round && *e.round != request.tag.round) continue;
    if (e.role && *e.role != request.tag.role) continue;
    if (e.times == 0) continue;
    if (e.fail_first > 0) {
      --e.fail_first;
      throw GatewayError("scripted transport failure");
    }
    if (e.times > 0) --e.times;
    ChatReply reply;
    reply.content = e.content;
    long request_chars = 0;
    for (const auto& m : request.messages) request_chars += static_cast<long>(m.content.size());
    reply.prompt_tokens = (request_chars + 3) / 4;
    reply.completion_tokens = (static_cast<long>(e.content.size()) + 3) / 4;
    reply.latency_s = 0.0;
    return reply;
  }
  throw GatewayError("unscripted call: phase=" + to_string(request.tag.phase) +
                     " round=" + std::to_string(request.tag.round) +
                     " role=" + request.tag.role);
}

// --- retries -----------------------------------------------------------------

void SystemClock::sleep_for(double seconds) {
  std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double SystemClock::now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

RetryingBackend::RetryingBackend(ChatBackend& inner, RetryPolicy policy, Clock& clock)
    : inner_(inner), policy_(std::move(policy)), clock_(clock) {}

ChatReply RetryingBackend::chat(const ChatRequest& request) {
  std::string last_cause;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    try {
      return inner_.chat(request);
    } catch (const GatewayError& e) {
      last_cause = e.what();
      if (attempt < policy_.max_attempts) {
        size_t idx = static_cast<size_t>(attempt - 1);
        double delay = policy_.backoff_s.empty()
                           ? 0.0
                           : policy_.backoff_s[std::min(idx, policy_.backoff_s.size() - 1)];
        if (delay > 0) clock_.sleep_for(delay);
      }
    }
  }
  throw GatewayError("gateway unavailable after " +
                     std::to_string(policy_.max_attempts) +
                     " attempts; last cause: " + last_cause);
}

// --- remote backend ----------------------------------------------------------

HttpBackend::HttpBackend(std::string base_url, std::string api_key)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

ChatReply HttpBackend::chat(const ChatRequest& request) {
  request.validate();
  nlohmann::json body;
  body["model"] = request.model_id;
  body["temperature"] = request.temperature;
  auto& messages = body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) {
    std::string role;
    switch (m.speaker) {
      case Speaker::system: role = "system"; break;
      case Speaker::user: role = "user"; break;
      case Speaker::agent:
      case Speaker::moderator: role = "assistant"; break;
    }
    messages.push_back({{"role", role}, {"content", m.content}});
  }
  if (!request.attachments.empty()) {
    // Attach image refs to the last user message as content parts.
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
      if ((*it)["role"] == "user") {
        nlohmann::json parts = nlohmann::json::array();
        parts.push_back({{"type", "text"}, {"text", (*it)["content"]}});
        for (const auto& ref : request.attachments)
          parts.push_back({{"type", "image_url"}, {"image_url", {{"url", ref}}}});
        (*it)["content"] = parts;
        break;
      }
    }
  }

  calls_.fetch_add(1);
  const double started = SystemClock{}.now();

  httplib::Client client(base_url_);
  client.set_read_timeout(300, 0);
  httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) throw GatewayError("transport failure contacting " + base_url_);
  if (res->status != 200)
    throw GatewayError("backend returned status " + std::to_string(res->status) +
                       ": " + res->body);

  ChatReply reply;
  try {
    nlohmann::json payload = nlohmann::json::parse(res->body);
    reply.content = payload.at("choices").at(0).at("message").at("content").get<std::string>();
    if (payload.contains("usage")) {
      reply.prompt_tokens = payload["usage"].value("prompt_tokens", 0);
      reply.completion_tokens = payload["usage"].value("completion_tokens", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("protocol error: malformed backend payload: ") + e.what());
  }
  reply.latency_s = SystemClock{}.now() - started;
  if (reply.content.empty())
    throw GatewayError("backend returned an empty completion");
  return reply;
}

// --- cache -------------------------------------------------------------------

CachingGateway::CachingGateway(ChatBackend& inner, std::vector<ReplyRecord> preloaded,
                               PersistFn persist)
    : inner_(inner), records_(std::move(preloaded)), persist_(std::move(persist)) {}

ChatReply CachingGateway::chat(const ChatRequest& request) {
  ++logical_calls_;
  const std::string digest = request_digest(request);
  for (const auto& rec : records_) {
    if (rec.key == request.tag) {
      if (rec.digest != digest)
        warnings_.push_back("prompt drift for cached reply " + to_string(rec.key.phase) +
                            "/r" + std::to_string(rec.key.round) + "/" + rec.key.role +
                            "; replaying stale transcript");
      ++cache_hits_;
      return rec.reply;
    }
  }
  ChatReply reply = inner_.chat(request);
  if (reply.content.empty())
    throw GatewayError("empty completion for " + to_string(request.tag.phase));
  records_.push_back({request.tag, digest, reply});
  if (persist_) persist_(records_);
  return reply;
}

// --- json --------------------------------------------------------------------

void to_json(nlohmann::json& j, const CacheKey& k) {
  j = {{"case_id", k.case_id},
       {"role", k.role},
       {"phase", to_string(k.phase)},
       {"round", k.round},
       {"seq", k.sequence_index}};
}

void from_json(const nlohmann::json& j, CacheKey& k) {
  j.at("case_id").get_to(k.case_id);
  j.at("role").get_to(k.role);
  k.phase = phase_from_string(j.at("phase").get<std::string>());
  j.at("round").get_to(k.round);
  j.at("seq").get_to(k.sequence_index);
}

void to_json(nlohmann::json& j, const ChatReply& r) {
  j = {{"content", r.content},
       {"prompt_tokens", r.prompt_tokens},
       {"completion_tokens", r.completion_tokens},
       {"latency_s", r.latency_s}};
}

void from_json(const nlohmann::json& j, ChatReply& r) {
  j.at("content").get_to(r.content);
  j.at("prompt_tokens").get_to(r.prompt_tokens);
  j.at("completion_tokens").get_to(r.completion_tokens);
  j.at("latency_s").get_to(r.latency_s);
}

void to_json(nlohmann::json& j, const ReplyRecord& r) {
  j = {{"key", r.key}, {"digest", r.digest}, {"reply", r.reply}};
}

void from_json(const nlohmann::json& j, ReplyRecord& r) {
  j.at("key").get_to(r.key);
  j.at("digest").get_to(r.digest);
  j.at("reply").get_to(r.reply);
}

}  // namespace kamac
