#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttc/transcript.hpp"

namespace ttc::backend {

struct FinishReason {
  enum class Kind { stop, length, other };

  Kind kind = Kind::stop;
  std::string tag;  // raw wire value for Kind::other

  static FinishReason stop() { return {Kind::stop, {}}; }
  static FinishReason length() { return {Kind::length, {}}; }
  static FinishReason other(std::string tag) { return {Kind::other, std::move(tag)}; }

  /// "stop" -> stop, "length" -> length, anything else -> other(tag).
  static FinishReason from_wire(std::string_view value);
  std::string to_wire() const;

  friend bool operator==(const FinishReason&, const FinishReason&) = default;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  Usage& operator+=(const Usage& rhs) {
    prompt_tokens += rhs.prompt_tokens;
    completion_tokens += rhs.completion_tokens;
    return *this;
  }
  friend bool operator==(const Usage&, const Usage&) = default;
};

struct Completion {
  std::string text;
  FinishReason finish_reason;
  Usage usage;
  bool usage_missing = false;  // response carried no usage block

  nlohmann::ordered_json to_json() const;
  static Completion from_json(const nlohmann::ordered_json& j);

  friend bool operator==(const Completion&, const Completion&) = default;
};

struct GenParams {
  std::int64_t max_completion_tokens = 1;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  // Passed through to the request body verbatim, in insertion order
  // (e.g. {"frequency_penalty": 1.0}).
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  /// Throws ValidationError if max_completion_tokens < 1, temperature < 0 or
  /// above `max_temperature`, or `extra` is not an object.
  void validate(double max_temperature) const;

  nlohmann::ordered_json to_json() const;
};

// Which protocol step a call belongs to. Deterministic backends key their
// responses on this; the wire request does not carry it.
enum class CallKind { scale_down, forced_answer, scale_up };

std::string_view to_string(CallKind kind);
CallKind call_kind_from_string(std::string_view text);

struct CallKey {
  std::string problem_id;
  CallKind kind = CallKind::scale_down;
  std::int64_t index = 0;  // budget (scale_down, forced_answer) or step (scale_up)
  int run = 0;

  std::string to_string() const;
};

/// The generation contract every backend satisfies. Implementations must be
/// safe to call from several threads at once.
///
/// Throws BackendError; retryable() distinguishes transport failures from
/// protocol errors.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual Completion generate(const transcript::Conversation& conversation, const GenParams& params,
                              const CallKey& key) = 0;

  virtual double max_temperature() const { return 2.0; }
  virtual std::string name() const = 0;
};

/// Chat-completions request body. Key order is fixed: model, messages,
/// max_tokens, temperature, seed (if set), then `extra` keys in order.
std::string encode_chat_request(const transcript::Conversation& conversation, const GenParams& params,
                                std::string_view model_id);

/// Maps the first choice of a chat-completions response body. Throws
/// DecodeError (with a body excerpt) when choices or content are missing.
Completion decode_chat_response(std::string_view body);

/// Identity of a request for record/replay: SHA-256 over the canonical form
/// of the messages, generation params and run index.
std::string request_digest(const transcript::Conversation& conversation, const GenParams& params, int run);

// ---------------------------------------------------------------------------
// Scripted mock

struct ScriptKey {
  std::string problem_id;
  CallKind kind = CallKind::scale_down;
  std::optional<std::int64_t> index;  // nullopt matches any budget/step
  std::optional<int> run;             // nullopt matches any run

  friend auto operator<=>(const ScriptKey&, const ScriptKey&) = default;
};

struct ScriptEntry {
  ScriptKey key;
  Completion completion;
  // Nominal token length of the full completion. Defaults to the number of
  // whitespace-separated words in the text.
  std::optional<std::int64_t> required_length;
};

/// Parses a line-delimited JSON script:
///   {"problem_id": str, "kind": "scale_down"|"forced_answer"|"scale_up",
///    "index"?: int, "run"?: int, "text": str, "finish_reason"?: str,
///    "usage"?: {...}, "required_length"?: int}
std::vector<ScriptEntry> load_script(const std::filesystem::path& path);
std::vector<ScriptEntry> parse_script(std::istream& in);
std::string serialize_script_entry(const ScriptEntry& entry);

/// Deterministic backend answering from a script.
///
/// Lookup tries (index, run), (index, any run), (any index, run), then
/// (any, any). When max_completion_tokens is below the entry's nominal
/// length, it returns the first floor(words * max / nominal) words with
/// finish_reason length and completion_tokens = max_completion_tokens.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(std::vector<ScriptEntry> script);

  Completion generate(const transcript::Conversation& conversation, const GenParams& params,
                      const CallKey& key) override;
  double max_temperature() const override { return 1.0e9; }
  std::string name() const override { return "mock"; }

  std::int64_t calls() const;

 private:
  std::map<ScriptKey, ScriptEntry> entries_;
  mutable std::mutex mutex_;
  std::int64_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Record / replay

/// Single-writer append sink for recordings; appends are serialized.
class RecordingSink {
 public:
  explicit RecordingSink(const std::filesystem::path& path);

  void append(const std::string& digest, const CallKey& key, const Completion& completion);
  std::int64_t entries() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  mutable std::mutex mutex_;
  std::int64_t entries_ = 0;
};

class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<RecordingSink> sink);

  Completion generate(const transcript::Conversation& conversation, const GenParams& params,
                      const CallKey& key) override;
  double max_temperature() const override { return inner_->max_temperature(); }
  std::string name() const override { return "record(" + inner_->name() + ")"; }

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<RecordingSink> sink_;
};

/// Answers from a recording by request digest; unknown digests raise
/// ReplayMissError. Never contacts any other backend.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(const std::filesystem::path& recording);

  Completion generate(const transcript::Conversation& conversation, const GenParams& params,
                      const CallKey& key) override;
  double max_temperature() const override { return 1.0e9; }
  std::string name() const override { return "replay"; }

  std::size_t size() const noexcept { return by_digest_.size(); }

 private:
  std::map<std::string, Completion, std::less<>> by_digest_;
};

// ---------------------------------------------------------------------------
// Retries

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30'000};
};

/// Retries retryable BackendErrors with exponential backoff; terminal errors
/// and the final retryable failure propagate.
class RetryingBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RetryingBackend(std::shared_ptr<Backend> inner, RetryPolicy policy, Sleeper sleeper = {});

  Completion generate(const transcript::Conversation& conversation, const GenParams& params,
                      const CallKey& key) override;
  double max_temperature() const override { return inner_->max_temperature(); }
  std::string name() const override { return inner_->name(); }

 private:
  std::shared_ptr<Backend> inner_;
  RetryPolicy policy_;
  Sleeper sleeper_;
};

}  // namespace ttc::backend
