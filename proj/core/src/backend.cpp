#include "ttc/backend.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <thread>

#include "strings.hpp"
#include "ttc/digest.hpp"
#include "ttc/error.hpp"

namespace ttc::backend {

using nlohmann::ordered_json;

FinishReason FinishReason::from_wire(std::string_view value) {
  if (value == "stop") return stop();
  if (value == "length") return length();
  return other(std::string(value));
}

std::string FinishReason::to_wire() const {
  switch (kind) {
    case Kind::stop:
      return "stop";
    case Kind::length:
      return "length";
    case Kind::other:
      return tag;
  }
  return tag;
}

ordered_json Completion::to_json() const {
  ordered_json j;
  j["text"] = text;
  j["finish_reason"] = finish_reason.to_wire();
  j["usage"] = {{"prompt_tokens", usage.prompt_tokens}, {"completion_tokens", usage.completion_tokens}};
  if (usage_missing) j["usage_missing"] = true;
  return j;
}

Completion Completion::from_json(const ordered_json& j) {
  Completion c;
  c.text = j.at("text").get<std::string>();
  c.finish_reason = FinishReason::from_wire(j.value("finish_reason", std::string("stop")));
  if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
    c.usage.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
    c.usage.completion_tokens = it->value("completion_tokens", std::int64_t{0});
  }
  c.usage_missing = j.value("usage_missing", false);
  return c;
}

void GenParams::validate(double max_temperature) const {
  if (max_completion_tokens < 1) {
    throw ValidationError("max_completion_tokens must be >= 1, got " + std::to_string(max_completion_tokens));
  }
  if (!(temperature >= 0.0) || temperature > max_temperature) {
    std::ostringstream msg;
    msg << "temperature " << temperature << " outside backend bounds [0, " << max_temperature << "]";
    throw ValidationError(msg.str());
  }
  if (!extra.is_object()) throw ValidationError("extra generation params must be a JSON object");
}

ordered_json GenParams::to_json() const {
  ordered_json j;
  j["max_tokens"] = max_completion_tokens;
  j["temperature"] = temperature;
  if (seed) j["seed"] = *seed;
  j["extra"] = extra;
  return j;
}

std::string_view to_string(CallKind kind) {
  switch (kind) {
    case CallKind::scale_down:
      return "scale_down";
    case CallKind::forced_answer:
      return "forced_answer";
    case CallKind::scale_up:
      return "scale_up";
  }
  return "scale_down";
}

CallKind call_kind_from_string(std::string_view text) {
  if (text == "scale_down") return CallKind::scale_down;
  if (text == "forced_answer") return CallKind::forced_answer;
  if (text == "scale_up") return CallKind::scale_up;
  throw ValidationError("unknown call kind \"" + std::string(text) + "\"");
}

std::string CallKey::to_string() const {
  return "run " + std::to_string(run) + ", problem " + problem_id + ", " + std::string(backend::to_string(kind)) +
         " " + std::to_string(index);
}

namespace {

ordered_json messages_json(const transcript::Conversation& conversation) {
  ordered_json messages = ordered_json::array();
  for (const auto& m : conversation.messages()) {
    messages.push_back({{"role", transcript::to_string(m.role)}, {"content", m.content}});
  }
  return messages;
}

}  // namespace

std::string encode_chat_request(const transcript::Conversation& conversation, const GenParams& params,
                                std::string_view model_id) {
  conversation.validate();
  ordered_json body;
  body["model"] = model_id;
  body["messages"] = messages_json(conversation);
  body["max_tokens"] = params.max_completion_tokens;
  body["temperature"] = params.temperature;
  if (params.seed) body["seed"] = *params.seed;
  for (const auto& [k, v] : params.extra.items()) body[k] = v;
  return body.dump();
}

Completion decode_chat_response(std::string_view body) {
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const ordered_json::parse_error& e) {
    throw DecodeError(std::string("response is not JSON: ") + e.what() + "; body: " + detail::excerpt(body));
  }
  const auto choices = j.find("choices");
  if (!j.is_object() || choices == j.end() || !choices->is_array() || choices->empty()) {
    throw DecodeError("response has no choices array; body: " + detail::excerpt(body));
  }
  const auto& choice = choices->front();
  const auto message = choice.find("message");
  if (message == choice.end() || !message->is_object()) {
    throw DecodeError("first choice has no message; body: " + detail::excerpt(body));
  }
  const auto content = message->find("content");
  if (content == message->end() || !content->is_string()) {
    throw DecodeError("first choice message has no content; body: " + detail::excerpt(body));
  }

  Completion c;
  c.text = content->get<std::string>();
  const auto finish = choice.find("finish_reason");
  if (finish != choice.end() && finish->is_string()) {
    c.finish_reason = FinishReason::from_wire(finish->get<std::string>());
  } else {
    c.finish_reason = FinishReason::other(finish == choice.end() || finish->is_null() ? "null" : finish->dump());
  }
  const auto usage = j.find("usage");
  if (usage != j.end() && usage->is_object()) {
    c.usage.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
    c.usage.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
  } else {
    c.usage_missing = true;
  }
  return c;
}

std::string request_digest(const transcript::Conversation& conversation, const GenParams& params, int run) {
  nlohmann::json j;
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : conversation.messages()) {
    messages.push_back({{"role", transcript::to_string(m.role)}, {"content", m.content}});
  }
  j["messages"] = std::move(messages);
  j["params"] = nlohmann::json(params.to_json());
  j["run"] = run;
  return sha256_hex(canonical_dump(j));
}

// ---------------------------------------------------------------------------

namespace {

struct WordSpan {
  std::size_t begin;
  std::size_t end;
};

std::vector<WordSpan> words(std::string_view text) {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const std::size_t begin = i;
    while (i < text.size() && !detail::is_space(text[i])) ++i;
    out.push_back({begin, i});
  }
  return out;
}

std::int64_t word_count(std::string_view text) { return static_cast<std::int64_t>(words(text).size()); }

}  // namespace

std::vector<ScriptEntry> parse_script(std::istream& in) {
  std::vector<ScriptEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      ScriptEntry e;
      e.key.problem_id = j.at("problem_id").get<std::string>();
      e.key.kind = call_kind_from_string(j.at("kind").get<std::string>());
      if (auto it = j.find("index"); it != j.end() && !it->is_null()) e.key.index = it->get<std::int64_t>();
      if (auto it = j.find("run"); it != j.end() && !it->is_null()) e.key.run = it->get<int>();
      e.completion = Completion::from_json(j);
      if (auto it = j.find("required_length"); it != j.end() && !it->is_null()) {
        e.required_length = it->get<std::int64_t>();
        if (*e.required_length < 1) throw ValidationError("required_length must be >= 1");
      }
      if (e.completion.text.empty() && e.completion.finish_reason.kind != FinishReason::Kind::other) {
        throw ValidationError("empty text is only allowed with an 'other' finish reason");
      }
      out.push_back(std::move(e));
    } catch (const ValidationError& e) {
      throw ValidationError("script line " + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("script line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open script " + path.string());
  return parse_script(in);
}

std::string serialize_script_entry(const ScriptEntry& entry) {
  ordered_json j;
  j["problem_id"] = entry.key.problem_id;
  j["kind"] = to_string(entry.key.kind);
  if (entry.key.index) j["index"] = *entry.key.index;
  if (entry.key.run) j["run"] = *entry.key.run;
  const auto completion = entry.completion.to_json();
  for (const auto& [k, v] : completion.items()) j[k] = v;
  if (entry.required_length) j["required_length"] = *entry.required_length;
  return j.dump();
}

MockBackend::MockBackend(std::vector<ScriptEntry> script) {
  for (auto& e : script) {
    auto key = e.key;
    if (!entries_.emplace(key, std::move(e)).second) {
      throw ValidationError("duplicate script key for problem \"" + key.problem_id + "\" (" +
                            std::string(to_string(key.kind)) + ")");
    }
  }
}

Completion MockBackend::generate(const transcript::Conversation& conversation, const GenParams& params,
                                 const CallKey& key) {
  conversation.validate();
  params.validate(max_temperature());
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }

  const ScriptKey candidates[] = {
      {key.problem_id, key.kind, key.index, key.run},
      {key.problem_id, key.kind, key.index, std::nullopt},
      {key.problem_id, key.kind, std::nullopt, key.run},
      {key.problem_id, key.kind, std::nullopt, std::nullopt},
  };
  const ScriptEntry* entry = nullptr;
  for (const auto& k : candidates) {
    if (auto it = entries_.find(k); it != entries_.end()) {
      entry = &it->second;
      break;
    }
  }
  if (entry == nullptr) {
    throw BackendError("mock script has no entry for " + key.to_string(), /*retryable=*/false);
  }

  Completion out = entry->completion;
  const auto spans = words(out.text);
  const auto total_words = static_cast<std::int64_t>(spans.size());
  const std::int64_t nominal = entry->required_length.value_or(total_words);

  std::int64_t prompt_words = 0;
  for (const auto& m : conversation.messages()) prompt_words += word_count(m.content);
  out.usage.prompt_tokens = prompt_words;
  out.usage_missing = false;

  if (params.max_completion_tokens < nominal) {
    std::int64_t keep = total_words * params.max_completion_tokens / nominal;
    if (keep == 0 && total_words > 1) keep = 1;
    out.text = keep == 0 ? std::string() : out.text.substr(0, spans[keep - 1].end);
    out.finish_reason = FinishReason::length();
    out.usage.completion_tokens = params.max_completion_tokens;
  } else {
    out.usage.completion_tokens = nominal;
  }
  return out;
}

std::int64_t MockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

// ---------------------------------------------------------------------------

RecordingSink::RecordingSink(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw StoreError("cannot open recording " + path.string() + " for append");
}

void RecordingSink::append(const std::string& digest, const CallKey& key, const Completion& completion) {
  ordered_json j;
  j["digest"] = digest;
  j["call"] = {{"problem_id", key.problem_id},
               {"kind", to_string(key.kind)},
               {"index", key.index},
               {"run", key.run}};
  j["completion"] = completion.to_json();
  const auto line = j.dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
  if (!out_) throw StoreError("write to recording " + path_.string() + " failed");
  ++entries_;
}

std::int64_t RecordingSink::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<RecordingSink> sink)
    : inner_(std::move(inner)), sink_(std::move(sink)) {}

Completion RecordingBackend::generate(const transcript::Conversation& conversation, const GenParams& params,
                                      const CallKey& key) {
  auto completion = inner_->generate(conversation, params, key);
  sink_->append(request_digest(conversation, params, key.run), key, completion);
  return completion;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& recording) {
  std::ifstream in(recording);
  if (!in) throw StoreError("cannot open recording " + recording.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      by_digest_.emplace(j.at("digest").get<std::string>(), Completion::from_json(j.at("completion")));
    } catch (const nlohmann::json::exception& e) {
      throw StoreError("recording " + recording.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

Completion ReplayBackend::generate(const transcript::Conversation& conversation, const GenParams& params,
                                   const CallKey& key) {
  const auto digest = request_digest(conversation, params, key.run);
  const auto it = by_digest_.find(digest);
  if (it == by_digest_.end()) throw ReplayMissError(digest);
  return it->second;
}

// ---------------------------------------------------------------------------

RetryingBackend::RetryingBackend(std::shared_ptr<Backend> inner, RetryPolicy policy, Sleeper sleeper)
    : inner_(std::move(inner)), policy_(policy), sleeper_(std::move(sleeper)) {
  if (policy_.max_attempts < 1) throw ValidationError("retry policy needs at least one attempt");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

Completion RetryingBackend::generate(const transcript::Conversation& conversation, const GenParams& params,
                                     const CallKey& key) {
  auto delay = policy_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return inner_->generate(conversation, params, key);
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= policy_.max_attempts) throw;
    }
    sleeper_(delay);
    const auto next = std::chrono::milliseconds(
        static_cast<std::int64_t>(std::llround(static_cast<double>(delay.count()) * policy_.multiplier)));
    delay = std::min(next, policy_.max_backoff);
  }
}

}  // namespace ttc::backend
