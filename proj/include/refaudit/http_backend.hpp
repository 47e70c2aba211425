#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "httplib.h"
#include "nlohmann/json.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/llm_gateway.hpp"

// OpenAI-compatible chat and embedding endpoints. Transport failures retry
// twice with backoff, then the fallback endpoint is tried when configured.
namespace refaudit::llm {

struct HttpEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8000
  std::string model;
  std::string api_key;
};

namespace detail {

inline json post_json(const HttpEndpoint& ep, const std::string& path, const json& body,
                      int timeout_seconds) {
  httplib::Client client(ep.base_url);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_connection_timeout(10, 0);
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res)
    throw Error(Errc::backend, "transport failure against " + ep.base_url + path);
  if (res->status < 200 || res->status >= 300)
    throw Error(Errc::backend, "backend returned status " + std::to_string(res->status) +
                                   " from " + ep.base_url + path);
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::backend, std::string("unparseable backend reply: ") + e.what());
  }
}

inline json post_with_retry(const HttpEndpoint& primary, const HttpEndpoint* fallback,
                            const std::string& path, const json& body, int timeout_seconds) {
  const int kRetries = 2;
  std::string last_error;
  for (int attempt = 0; attempt <= kRetries; ++attempt) {
    try {
      return post_json(primary, path, body, timeout_seconds);
    } catch (const Error& e) {
      last_error = e.what();
      std::this_thread::sleep_for(std::chrono::milliseconds(250 * (attempt + 1)));
    }
  }
  if (fallback && !fallback->base_url.empty()) {
    try {
      return post_json(*fallback, path, body, timeout_seconds);
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw Error(Errc::backend, "backend unreachable after retries: " + last_error);
}

}  // namespace detail

class HttpBackend : public LanguageBackend {
 public:
  HttpBackend(HttpEndpoint endpoint, int context_window, DecodingConfig decoding = {},
              HttpEndpoint fallback = {}, int timeout_seconds = 300)
      : endpoint_(std::move(endpoint)),
        fallback_(std::move(fallback)),
        window_(context_window),
        decoding_(decoding),
        timeout_seconds_(timeout_seconds) {
    if (window_ <= 0) throw Error(Errc::config, "context window must be positive");
  }

  RawReply exchange(const std::string&, const std::vector<Message>& messages,
                    const ToolRegistry* tools) override {
    json body;
    body["model"] = endpoint_.model;
    body["temperature"] = decoding_.temperature;
    body["top_p"] = decoding_.top_p;
    json msgs = json::array();
    for (const auto& m : messages) {
      // the wire protocol expects tool outputs as user-visible content
      std::string role = m.role == "tool" ? "user" : m.role;
      msgs.push_back({{"role", role}, {"content", m.content}});
    }
    body["messages"] = msgs;
    if (tools) {
      json fns = json::array();
      for (const auto& [_, spec] : tools->specs()) {
        json props = json::object();
        json required = json::array();
        for (const auto& p : spec.params) {
          props[p.name] = {{"type", p.type == "integer" ? "integer" : p.type},
                           {"description", p.description}};
          if (p.required) required.push_back(p.name);
        }
        fns.push_back({{"type", "function"},
                       {"function",
                        {{"name", spec.name},
                         {"description", spec.description},
                         {"parameters",
                          {{"type", "object"}, {"properties", props}, {"required", required}}}}}});
      }
      body["tools"] = fns;
    }

    json reply = detail::post_with_retry(endpoint_, &fallback_, "/v1/chat/completions", body,
                                         timeout_seconds_);

    RawReply out;
    json content = json::object();
    if (reply.contains("choices") && !reply["choices"].empty()) {
      const json& msg = reply["choices"][0]["message"];
      content["text"] = msg.value("content", "");
      json calls = json::array();
      for (const auto& tc : msg.value("tool_calls", json::array())) {
        json call;
        call["id"] = tc.value("id", "");
        call["tool"] = tc.contains("function") ? tc["function"].value("name", "") : "";
        std::string args_text =
            tc.contains("function") ? tc["function"].value("arguments", "{}") : "{}";
        try {
          call["args"] = json::parse(args_text);
        } catch (const json::parse_error&) {
          call["args"] = json::object({{"_raw", args_text}});
        }
        calls.push_back(call);
      }
      content["tool_calls"] = calls;
      content["complete"] =
          reply["choices"][0].value("finish_reason", "") == "stop" && calls.empty();
    }
    out.content = content;
    if (reply.contains("usage")) {
      out.input_tokens = reply["usage"].value("prompt_tokens", 0);
      out.output_tokens = reply["usage"].value("completion_tokens", 0);
    }
    return out;
  }

  int context_window() const override { return window_; }
  const DecodingConfig& decoding() const override { return decoding_; }

 private:
  HttpEndpoint endpoint_;
  HttpEndpoint fallback_;
  int window_;
  DecodingConfig decoding_;
  int timeout_seconds_;
};

class HttpEmbedder : public EmbeddingBackend {
 public:
  HttpEmbedder(HttpEndpoint endpoint, HttpEndpoint fallback = {}, int timeout_seconds = 120)
      : endpoint_(std::move(endpoint)),
        fallback_(std::move(fallback)),
        timeout_seconds_(timeout_seconds) {}

  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override {
    json body;
    body["model"] = endpoint_.model;
    body["input"] = texts;
    json reply =
        detail::post_with_retry(endpoint_, &fallback_, "/v1/embeddings", body, timeout_seconds_);
    if (!reply.contains("data") || !reply["data"].is_array())
      throw Error(Errc::backend, "embedding reply missing 'data'");
    std::vector<std::vector<double>> out(texts.size());
    for (const auto& item : reply["data"]) {
      std::size_t index = item.value("index", 0);
      if (index >= out.size()) throw Error(Errc::backend, "embedding reply index out of range");
      out[index] = item.at("embedding").get<std::vector<double>>();
    }
    return out;
  }

 private:
  HttpEndpoint endpoint_;
  HttpEndpoint fallback_;
  int timeout_seconds_;
};

}  // namespace refaudit::llm
