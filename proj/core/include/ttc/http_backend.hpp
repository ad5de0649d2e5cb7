#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ttc/backend.hpp"

namespace ttc::backend {

inline constexpr const char* kApiKeyEnv = "TTC_API_KEY";

struct HttpOptions {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string model_id;
  std::optional<std::string> api_key;  // defaults to $TTC_API_KEY
  int timeout_seconds = 600;
  int max_in_flight = 4;
  double max_temperature = 2.0;
};

/// JSON-over-HTTP chat-completions client: POST <base_url>/chat/completions.
///
/// Connection failures, timeouts, 408, 409, 429 and 5xx are retryable; other
/// non-200 statuses and undecodable bodies are terminal.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpOptions options);
  ~HttpBackend() override;

  Completion generate(const transcript::Conversation& conversation, const GenParams& params,
                      const CallKey& key) override;
  double max_temperature() const override { return options_.max_temperature; }
  std::string name() const override { return "live"; }

 private:
  struct Impl;
  HttpOptions options_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ttc::backend
