#pragma once
// Uniform chat interface over three backends: a remote chat-completion
// client, a deterministic scripted backend for tests, and a write-through
// reply cache that makes replays exact.

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kamac/core.hpp"

namespace kamac {

enum class Phase {
  recruit_initial,
  assess,
  interact,
  kg_detect,
  recruit_more,
  update,
  moderate,
};

std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct CacheKey {
  std::string case_id;
  std::string role;  // normalized; empty for roster-level calls
  Phase phase = Phase::assess;
  int round = 0;
  int sequence_index = 0;  // unique per backend call within a case run

  bool operator==(const CacheKey&) const = default;
};

struct ChatRequest {
  std::string model_id;
  double temperature = 0.0;
  std::vector<Message> messages;
  std::vector<std::string> attachments;  // opaque image refs
  CacheKey tag;

  void validate() const;
};

struct ChatReply {
  std::string content;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  double latency_s = 0.0;
};

// FNV-1a over the request's message contents; detects prompt drift when a
// cached reply is replayed against an edited template.
std::string request_digest(const ChatRequest& req);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatReply chat(const ChatRequest& request) = 0;
  // Calls that actually reached this backend (cache hits excluded upstream).
  virtual long live_calls() const = 0;
};

// --- scripted backend --------------------------------------------------------

struct ScriptEntry {
  std::optional<Phase> phase;
  std::optional<int> round;
  std::optional<std::string> role;  // matched against normalized tag role
  std::string content;
  int times = 1;  // -1 = unlimited
  int fail_first = 0;  // forced transport failures before succeeding
};

// Replays canned replies keyed by phase/round/role. An unmatched request is
// a test failure signal. Token counts are synthetic: ceil(chars / 4).
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries);
  static ScriptedBackend from_file(const std::string& path);
  static std::vector<ScriptEntry> entries_from_json(const nlohmann::json& j);

  ChatReply chat(const ChatRequest& request) override;
  long live_calls() const override { return calls_.load(); }

 private:
  std::vector<ScriptEntry> entries_;
  std::atomic<long> calls_{0};
  std::mutex mutex_;
};

// --- retries -----------------------------------------------------------------

class Clock {
 public:
  virtual ~Clock() = default;
  virtual void sleep_for(double seconds) = 0;
  virtual double now() = 0;
};

class SystemClock : public Clock {
 public:
  void sleep_for(double seconds) override;
  double now() override;
};

// Records sleeps instead of performing them.
class FakeClock : public Clock {
 public:
  void sleep_for(double seconds) override { sleeps.push_back(seconds); now_s += seconds; }
  double now() override { return now_s; }
  std::vector<double> sleeps;
  double now_s = 0;
};

// At most max_attempts attempts with the configured backoff schedule; the
// final failure is rethrown as gateway-unavailable with the last cause.
class RetryingBackend : public ChatBackend {
 public:
  RetryingBackend(ChatBackend& inner, RetryPolicy policy, Clock& clock);
  ChatReply chat(const ChatRequest& request) override;
  long live_calls() const override { return inner_.live_calls(); }

 private:
  ChatBackend& inner_;
  RetryPolicy policy_;
  Clock& clock_;
};

// --- remote backend ----------------------------------------------------------

// Chat-completion wire format over TLS. API key comes from the environment;
// the engine never decodes image pixels, attachments are forwarded as refs.
class HttpBackend : public ChatBackend {
 public:
  HttpBackend(std::string base_url, std::string api_key);
  ChatReply chat(const ChatRequest& request) override;
  long live_calls() const override { return calls_.load(); }

 private:
  std::string base_url_;
  std::string api_key_;
  std::atomic<long> calls_{0};
};

// --- cache -------------------------------------------------------------------

struct ReplyRecord {
  CacheKey key;
  std::string digest;
  ChatReply reply;
};

// Write-through reply cache scoped to one case run. Serves hits from the
// preloaded records (warning on digest drift) and persists after every miss.
class CachingGateway : public ChatBackend {
 public:
  using PersistFn = std::function<void(const std::vector<ReplyRecord>&)>;

  CachingGateway(ChatBackend& inner, std::vector<ReplyRecord> preloaded,
                 PersistFn persist);

  ChatReply chat(const ChatRequest& request) override;
  long live_calls() const override { return inner_.live_calls(); }

  long logical_calls() const { return logical_calls_; }
  long cache_hits() const { return cache_hits_; }
  const std::vector<ReplyRecord>& records() const { return records_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  ChatBackend& inner_;
  std::vector<ReplyRecord> records_;
  PersistFn persist_;
  long logical_calls_ = 0;
  long cache_hits_ = 0;
  std::vector<std::string> warnings_;
};

void to_json(nlohmann::json& j, const CacheKey& k);
void from_json(const nlohmann::json& j, CacheKey& k);
void to_json(nlohmann::json& j, const ChatReply& r);
void from_json(const nlohmann::json& j, ChatReply& r);
void to_json(nlohmann::json& j, const ReplyRecord& r);
void from_json(const nlohmann::json& j, ReplyRecord& r);

}  // namespace kamac
