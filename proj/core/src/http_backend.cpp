#include "ttc/http_backend.hpp"

#include <cstdlib>
#include <semaphore>

#include <httplib.h>

#include "strings.hpp"
#include "ttc/error.hpp"

namespace ttc::backend {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // base path + /chat/completions
};

Endpoint split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("base_url \"" + base_url + "\" must start with http:// or https://");
  }
  const auto scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ValidationError("base_url \"" + base_url + "\" has unsupported scheme " + scheme);
  }
  const auto path_begin = base_url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = base_url.substr(0, path_begin);
  std::string base_path = path_begin == std::string::npos ? std::string() : base_url.substr(path_begin);
  while (!base_path.empty() && base_path.back() == '/') base_path.pop_back();
  e.path = base_path + "/chat/completions";
  return e;
}

bool retryable_status(int status) { return status == 408 || status == 409 || status == 429 || status >= 500; }

}  // namespace

struct HttpBackend::Impl {
  explicit Impl(int max_in_flight) : slots(max_in_flight) {}

  Endpoint endpoint;
  std::string api_key;
  std::counting_semaphore<> slots;
};

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  if (options_.max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
  if (options_.model_id.empty()) throw ValidationError("live backend needs a model_id");
  impl_ = std::make_unique<Impl>(options_.max_in_flight);
  impl_->endpoint = split_base_url(options_.base_url);
  if (options_.api_key) {
    impl_->api_key = *options_.api_key;
  } else if (const char* env = std::getenv(kApiKeyEnv)) {
    impl_->api_key = env;
  }
}

HttpBackend::~HttpBackend() = default;

Completion HttpBackend::generate(const transcript::Conversation& conversation, const GenParams& params,
                                 const CallKey& key) {
  params.validate(max_temperature());
  const auto body = encode_chat_request(conversation, params, options_.model_id);

  impl_->slots.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{impl_->slots};

  httplib::Client client(impl_->endpoint.origin);
  client.set_connection_timeout(std::chrono::seconds(std::min(options_.timeout_seconds, 30)));
  client.set_read_timeout(std::chrono::seconds(options_.timeout_seconds));
  client.set_write_timeout(std::chrono::seconds(options_.timeout_seconds));
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);

  auto result = client.Post(impl_->endpoint.path, headers, body, "application/json");
  if (!result) {
    throw BackendError("transport error for " + key.to_string() + ": " + httplib::to_string(result.error()),
                       /*retryable=*/true, httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw BackendError("HTTP " + std::to_string(result->status) + " for " + key.to_string(),
                       retryable_status(result->status), detail::excerpt(result->body, 2000));
  }
  try {
    return decode_chat_response(result->body);
  } catch (const DecodeError& e) {
    throw BackendError(e.what(), /*retryable=*/false, detail::excerpt(result->body, 2000));
  }
}

}  // namespace ttc::backend
