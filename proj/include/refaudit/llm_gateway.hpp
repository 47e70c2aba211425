#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/util.hpp"

namespace refaudit::llm {

using nlohmann::json;

struct Message {
  std::string role;  // system | user | assistant | tool
  std::string content;
};

inline Message make_user(std::string content) { return {"user", std::move(content)}; }
inline Message make_tool_result(std::string content) { return {"tool", std::move(content)}; }

// ---------------------------------------------------------------------------
// token accounting

// Deterministic over-estimate of backend tokenization: chars/3.5 plus a 10%
// margin. Compaction only needs a safe upper bound.
inline long estimate_tokens(std::string_view text) {
  if (text.empty()) return 0;
  return static_cast<long>(std::ceil(static_cast<double>(text.size()) / 3.5 * 1.1));
}

// Per-stage in/out counters plus the raw exchange log. Stage sums and
// exchange sums must always agree; increments are serialized.
class TokenLedger {
 public:
  struct Use {
    long in = 0;
    long out = 0;
  };

  void record(const std::string& stage, long in, long out) {
    std::lock_guard<std::mutex> lock(mu_);
    stages_[stage].in += in;
    stages_[stage].out += out;
    exchanges_.push_back({stage, in, out});
  }

  Use stage_total(const std::string& stage) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = stages_.find(stage);
    return it == stages_.end() ? Use{} : it->second;
  }

  Use total() const {
    std::lock_guard<std::mutex> lock(mu_);
    Use t;
    for (const auto& [_, u] : stages_) {
      t.in += u.in;
      t.out += u.out;
    }
    return t;
  }

  Use exchange_total() const {
    std::lock_guard<std::mutex> lock(mu_);
    Use t;
    for (const auto& [stage, in, out] : exchanges_) {
      t.in += in;
      t.out += out;
    }
    return t;
  }

  std::size_t exchange_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return exchanges_.size();
  }

  json to_json() const {
    std::lock_guard<std::mutex> lock(mu_);
    json stages = json::object();
    for (const auto& [name, use] : stages_)
      stages[name] = {{"input_tokens", use.in}, {"output_tokens", use.out}};
    return stages;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, Use> stages_;
  std::vector<std::tuple<std::string, long, long>> exchanges_;
};

// ---------------------------------------------------------------------------
// closed tool registry

struct ToolParam {
  std::string name;
  std::string type;  // string | integer | number | boolean | array | object
  bool required = true;
  std::string description;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ToolParam> params;
};

struct ToolCallEnvelope {
  std::string tool;
  json args;
  std::string call_id;
};

class ToolRegistry {
 public:
  void add(ToolSpec spec) { specs_[spec.name] = std::move(spec); }

  bool contains(const std::string& name) const { return specs_.count(name) > 0; }

  const std::map<std::string, ToolSpec>& specs() const { return specs_; }

  // Empty result means valid; otherwise a human-readable schema violation.
  std::optional<std::string> validate(const std::string& name, const json& args) const {
    auto it = specs_.find(name);
    if (it == specs_.end()) return "unknown tool: " + name;
    if (!args.is_object()) return "arguments must be an object for tool " + name;
    const ToolSpec& spec = it->second;
    for (const auto& p : spec.params) {
      if (!args.contains(p.name)) {
        if (p.required) return "missing required argument '" + p.name + "' for tool " + name;
        continue;
      }
      const json& v = args[p.name];
      bool ok = (p.type == "string" && v.is_string()) ||
                (p.type == "integer" && v.is_number_integer()) ||
                (p.type == "number" && v.is_number()) ||
                (p.type == "boolean" && v.is_boolean()) ||
                (p.type == "array" && v.is_array()) ||
                (p.type == "object" && v.is_object());
      if (!ok)
        return "argument '" + p.name + "' of tool " + name + " must have type " + p.type;
    }
    for (const auto& [key, _] : args.items()) {
      bool known = false;
      for (const auto& p : spec.params)
        if (p.name == key) known = true;
      if (!known) return "unexpected argument '" + key + "' for tool " + name;
    }
    return std::nullopt;
  }

  json render() const {
    json out = json::array();
    for (const auto& [_, spec] : specs_) {
      json params = json::array();
      for (const auto& p : spec.params)
        params.push_back({{"name", p.name},
                          {"type", p.type},
                          {"required", p.required},
                          {"description", p.description}});
      out.push_back(
          {{"name", spec.name}, {"description", spec.description}, {"parameters", params}});
    }
    return out;
  }

 private:
  std::map<std::string, ToolSpec> specs_;
};

// ---------------------------------------------------------------------------
// backends

struct DecodingConfig {
  double temperature = 0.1;
  double top_p = 0.9;
};

struct RawReply {
  json content;  // {"text": ..., "tool_calls": [...], "complete": bool}
  long input_tokens = 0;
  long output_tokens = 0;
};

class LanguageBackend {
 public:
  virtual ~LanguageBackend() = default;
  virtual RawReply exchange(const std::string& system_id, const std::vector<Message>& messages,
                            const ToolRegistry* tools) = 0;
  virtual int context_window() const = 0;
  virtual const DecodingConfig& decoding() const = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  // Raw vectors; the gateway normalizes. Must preserve batch order.
  virtual std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) = 0;
};

// ---------------------------------------------------------------------------
// scripted backend: the deterministic offline test backbone

// Responses are keyed by a digest of (system prompt id, latest non-assistant
// message). Fixture documents may also supply per-system-id sequences that
// are consumed in call order when no keyed entry matches, plus an optional
// repeating default.
class ScriptedBackend : public LanguageBackend {
 public:
  explicit ScriptedBackend(int context_window = 128000) : window_(context_window) {}

  static std::string key_for(const std::string& system_id, const std::string& last_message) {
    return util::digest(system_id + "\x1f" + last_message);
  }

  void add_keyed(const std::string& system_id, const std::string& last_message, json response) {
    keyed_[key_for(system_id, last_message)].push_back(std::move(response));
  }

  void add_sequence(const std::string& system_id, json response) {
    sequences_[system_id].push_back(std::move(response));
  }

  void set_repeat(const std::string& system_id, json response) {
    repeat_[system_id] = std::move(response);
  }

  // Fixture document: {"schema_version":1, "context_window":N, "entries":[
  //   {"system_id":..., "last_message":..., "responses":[...]} |
  //   {"system_id":..., "responses":[...]} |
  //   {"system_id":..., "repeat":{...}} ]}
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path) {
    json doc;
    try {
      doc = json::parse(util::read_text_file(path));
    } catch (const json::parse_error& e) {
      throw Error(Errc::format, std::string("malformed scripted fixture: ") + e.what());
    }
    if (doc.value("schema_version", 0) != 1)
      throw Error(Errc::state, "scripted fixture schema version mismatch: expected 1");
    auto backend = std::make_unique<ScriptedBackend>(doc.value("context_window", 128000));
    for (const auto& entry : doc.value("entries", json::array())) {
      std::string system_id = entry.at("system_id").get<std::string>();
      if (entry.contains("repeat")) {
        backend->set_repeat(system_id, entry["repeat"]);
        continue;
      }
      for (const auto& resp : entry.at("responses")) {
        if (entry.contains("last_message"))
          backend->add_keyed(system_id, entry["last_message"].get<std::string>(), resp);
        else
          backend->add_sequence(system_id, resp);
      }
    }
    return backend;
  }

  RawReply exchange(const std::string& system_id, const std::vector<Message>& messages,
                    const ToolRegistry*) override {
    ++calls_;
    std::string last;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
      if (it->role != "assistant" && it->role != "system") {
        last = it->content;
        break;
      }
    }
    json response;
    std::string key = key_for(system_id, last);
    if (auto it = keyed_.find(key); it != keyed_.end() && !it->second.empty()) {
      response = it->second.front();
      it->second.pop_front();
    } else if (auto sit = sequences_.find(system_id); sit != sequences_.end() && !sit->second.empty()) {
      response = sit->second.front();
      sit->second.pop_front();
    } else if (auto rit = repeat_.find(system_id); rit != repeat_.end()) {
      response = rit->second;
    } else {
      throw Error(Errc::backend,
                  "scripted backend has no response for system id '" + system_id + "'");
    }

    RawReply reply;
    reply.content = response;
    if (response.contains("usage")) {
      reply.input_tokens = response["usage"].value("in", 0);
      reply.output_tokens = response["usage"].value("out", 0);
    } else {
      long in = 0;
      for (const auto& m : messages) in += estimate_tokens(m.content);
      reply.input_tokens = in;
      reply.output_tokens = estimate_tokens(response.dump());
    }
    return reply;
  }

  int context_window() const override { return window_; }
  const DecodingConfig& decoding() const override { return decoding_; }
  int calls() const { return calls_; }

 private:
  int window_;
  DecodingConfig decoding_{};
  std::map<std::string, std::deque<json>> keyed_;
  std::map<std::string, std::deque<json>> sequences_;
  std::map<std::string, json> repeat_;
  int calls_ = 0;
};

// Deterministic local embedder: hashed bag-of-words counts over 256 buckets.
class HashedEmbedder : public EmbeddingBackend {
 public:
  static constexpr std::size_t kDim = 256;

  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
      std::vector<double> v(kDim, 0.0);
      for (const auto& tok : util::word_tokens(text))
        v[util::fnv1a64(tok) % kDim] += 1.0;
      out.push_back(std::move(v));
    }
    return out;
  }
};

// Fixed text -> vector table; unknown text is a backend failure.
class ScriptedEmbedder : public EmbeddingBackend {
 public:
  void add(const std::string& text, std::vector<double> vec) { table_[text] = std::move(vec); }

  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end())
        throw Error(Errc::backend, "scripted embedder has no vector for text: " +
                                       util::truncate(t, 80));
      out.push_back(it->second);
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
};

// ---------------------------------------------------------------------------
// gateway operations

struct ChatResult {
  std::string text;
  std::vector<ToolCallEnvelope> tool_calls;
  bool complete = false;
  std::vector<std::string> diagnostics;  // dropped malformed calls etc.
  long input_tokens = 0;
  long output_tokens = 0;
};

namespace detail {

inline long predicted_request_tokens(const std::vector<Message>& messages,
                                     const ToolRegistry* tools) {
  long total = 0;
  for (const auto& m : messages) total += estimate_tokens(m.content) + 4;
  if (tools) total += estimate_tokens(tools->render().dump());
  return total;
}

struct ParsedReply {
  std::string text;
  std::vector<ToolCallEnvelope> calls;
  bool complete = false;
};

inline ParsedReply parse_reply(const json& content, int* next_call_id) {
  ParsedReply parsed;
  if (content.is_string()) {
    parsed.text = content.get<std::string>();
    return parsed;
  }
  parsed.text = content.value("text", "");
  parsed.complete = content.value("complete", false);
  for (const auto& call : content.value("tool_calls", json::array())) {
    ToolCallEnvelope env;
    env.tool = call.value("tool", call.value("name", ""));
    env.args = call.value("args", json::object());
    env.call_id = call.value("id", "");
    if (env.call_id.empty()) env.call_id = "c" + std::to_string((*next_call_id)++);
    parsed.calls.push_back(std::move(env));
  }
  return parsed;
}

}  // namespace detail

// One agent query: validates tool calls against the closed registry before
// they are dispatched. Malformed calls go back to the model once for
// self-correction, then are dropped with a diagnostic. The caller compacts
// first; an oversized request is a precondition error, never a silent
// truncation.
inline ChatResult chat(LanguageBackend& backend, const std::string& system_id,
                       const std::vector<Message>& messages, const ToolRegistry* tools,
                       TokenLedger* ledger, const std::string& stage) {
  long predicted = detail::predicted_request_tokens(messages, tools);
  if (predicted > backend.context_window())
    throw Error(Errc::precondition,
                "predicted request of " + std::to_string(predicted) +
                    " tokens exceeds context window of " +
                    std::to_string(backend.context_window()));

  ChatResult result;
  int next_id = 1;

  RawReply raw = backend.exchange(system_id, messages, tools);
  if (ledger) ledger->record(stage, raw.input_tokens, raw.output_tokens);
  result.input_tokens += raw.input_tokens;
  result.output_tokens += raw.output_tokens;

  auto parsed = detail::parse_reply(raw.content, &next_id);
  result.text = parsed.text;
  result.complete = parsed.complete;

  std::vector<std::pair<ToolCallEnvelope, std::string>> malformed;
  for (auto& call : parsed.calls) {
    if (!tools) {
      result.diagnostics.push_back("tool call outside a tool context: " + call.tool);
      continue;
    }
    if (auto err = tools->validate(call.tool, call.args))
      malformed.emplace_back(std::move(call), *err);
    else
      result.tool_calls.push_back(std::move(call));
  }

  if (!malformed.empty() && tools) {
    std::string feedback = "The following tool calls were rejected; correct and re-issue them:\n";
    for (const auto& [call, err] : malformed)
      feedback += "- " + call.tool + ": " + err + "\n";
    std::vector<Message> follow = messages;
    follow.push_back({"assistant", raw.content.dump()});
    follow.push_back({"user", feedback});

    RawReply raw2 = backend.exchange(system_id, follow, tools);
    if (ledger) ledger->record(stage, raw2.input_tokens, raw2.output_tokens);
    result.input_tokens += raw2.input_tokens;
    result.output_tokens += raw2.output_tokens;

    auto parsed2 = detail::parse_reply(raw2.content, &next_id);
    if (parsed2.complete) result.complete = true;
    for (auto& call : parsed2.calls) {
      if (auto err = tools->validate(call.tool, call.args))
        result.diagnostics.push_back("dropped malformed tool call " + call.tool + ": " + *err);
      else
        result.tool_calls.push_back(std::move(call));
    }
  }
  return result;
}

// Batch embedding with unit normalization: every returned vector has L2 norm
// 1 within 1e-6, order preserved. Failures propagate; similarity scoring
// depends on real values and must not silently fall back.
inline std::vector<std::vector<double>> embed(EmbeddingBackend& backend,
                                              const std::vector<std::string>& texts,
                                              TokenLedger* ledger = nullptr,
                                              const std::string& stage = "profiling") {
  if (texts.empty()) throw Error(Errc::precondition, "embed requires a non-empty batch");
  for (const auto& t : texts)
    if (t.empty()) throw Error(Errc::precondition, "embed requires non-empty texts");

  auto raw = backend.embed_raw(texts);
  if (raw.size() != texts.size())
    throw Error(Errc::backend, "embedding backend returned a mismatched batch");

  long in_tokens = 0;
  for (const auto& t : texts) in_tokens += estimate_tokens(t);
  if (ledger) ledger->record(stage, in_tokens, 0);

  for (auto& v : raw) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 0.0)
      throw Error(Errc::backend, "embedding backend returned a zero vector");
    for (double& x : v) x /= norm;
  }
  return raw;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw Error(Errc::precondition, "cosine requires equal-dimension vectors");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;
}

}  // namespace refaudit::llm
