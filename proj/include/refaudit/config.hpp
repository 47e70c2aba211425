#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "nlohmann/json.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/util.hpp"

// Run configuration with the documented precedence: flags > environment >
// config file > defaults. Defaults pin the selection threshold at 0.5, the
// top-5 supplement, tau_M at 0.8, and 3 inspection iterations.
namespace refaudit::config {

using nlohmann::json;

struct BackendConfig {
  std::string kind = "scripted";  // scripted | http
  std::string endpoint;
  std::string fallback_endpoint;
  std::string model;
  std::string api_key;
  std::string fixture;  // scripted fixture document
  int context_window = 128000;
  double temperature = 0.1;
  double top_p = 0.9;
};

struct EmbedderConfig {
  std::string kind = "hashed";  // hashed | http
  std::string endpoint;
  std::string fallback_endpoint;
  std::string model;
};

struct RunConfig {
  std::filesystem::path state_dir = "state";
  BackendConfig backend;
  EmbedderConfig embedder;
  double tau_m = 0.8;            // module embedding promotion threshold
  double keep_threshold = 0.5;   // similarity keep rule
  int supplement_size = 5;       // top-N supplement when <3 pass
  int max_iterations = 3;        // inspection iterations per repository
  int turn_budget = 40;          // tool calls per iteration
  double context_reserve = 0.20;
  int poc_max_attempts = 3;
  std::string sandbox_mode = "fake";  // container | fake | off
  std::string poc_marker = "SINK-REACHED";
  std::string sandbox_fixture;  // outcomes for the fake executor
  int shared_entries_per_run = 5;
  int shared_entry_max_chars = 2000;
  int search_hit_cap = 200;
  int read_line_cap = 400;
  int search_width_cap = 400;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(tau_m)) throw Error(Errc::config, "tau_m must lie in [0,1]");
    if (!unit(keep_threshold)) throw Error(Errc::config, "keep_threshold must lie in [0,1]");
    if (!unit(context_reserve)) throw Error(Errc::config, "context_reserve must lie in [0,1]");
    if (max_iterations < 1) throw Error(Errc::config, "max_iterations must be at least 1");
    if (turn_budget < 1) throw Error(Errc::config, "turn_budget must be at least 1");
    if (supplement_size < 1) throw Error(Errc::config, "supplement_size must be at least 1");
    if (poc_max_attempts < 1) throw Error(Errc::config, "poc_max_attempts must be at least 1");
    if (backend.kind != "scripted" && backend.kind != "http")
      throw Error(Errc::config, "backend.kind must be 'scripted' or 'http'");
    if (embedder.kind != "hashed" && embedder.kind != "http")
      throw Error(Errc::config, "embedder.kind must be 'hashed' or 'http'");
    if (sandbox_mode != "container" && sandbox_mode != "fake" && sandbox_mode != "off")
      throw Error(Errc::config, "sandbox_mode must be 'container', 'fake', or 'off'");
    if (backend.context_window <= 0)
      throw Error(Errc::config, "backend.context_window must be positive");
  }
};

namespace detail {

inline std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

inline void apply_file(RunConfig& cfg, const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(util::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::config, std::string("malformed config file: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::config, "config file must hold a JSON object");
  if (doc.contains("state_dir")) cfg.state_dir = doc["state_dir"].get<std::string>();
  if (doc.contains("backend")) {
    const json& b = doc["backend"];
    cfg.backend.kind = b.value("kind", cfg.backend.kind);
    cfg.backend.endpoint = b.value("endpoint", cfg.backend.endpoint);
    cfg.backend.fallback_endpoint = b.value("fallback_endpoint", cfg.backend.fallback_endpoint);
    cfg.backend.model = b.value("model", cfg.backend.model);
    cfg.backend.api_key = b.value("api_key", cfg.backend.api_key);
    cfg.backend.fixture = b.value("fixture", cfg.backend.fixture);
    cfg.backend.context_window = b.value("context_window", cfg.backend.context_window);
    cfg.backend.temperature = b.value("temperature", cfg.backend.temperature);
    cfg.backend.top_p = b.value("top_p", cfg.backend.top_p);
  }
  if (doc.contains("embedder")) {
    const json& e = doc["embedder"];
    cfg.embedder.kind = e.value("kind", cfg.embedder.kind);
    cfg.embedder.endpoint = e.value("endpoint", cfg.embedder.endpoint);
    cfg.embedder.fallback_endpoint = e.value("fallback_endpoint", cfg.embedder.fallback_endpoint);
    cfg.embedder.model = e.value("model", cfg.embedder.model);
  }
  cfg.tau_m = doc.value("tau_m", cfg.tau_m);
  cfg.keep_threshold = doc.value("keep_threshold", cfg.keep_threshold);
  cfg.supplement_size = doc.value("supplement_size", cfg.supplement_size);
  cfg.max_iterations = doc.value("max_iterations", cfg.max_iterations);
  cfg.turn_budget = doc.value("turn_budget", cfg.turn_budget);
  cfg.context_reserve = doc.value("context_reserve", cfg.context_reserve);
  cfg.poc_max_attempts = doc.value("poc_max_attempts", cfg.poc_max_attempts);
  cfg.sandbox_mode = doc.value("sandbox_mode", cfg.sandbox_mode);
  cfg.poc_marker = doc.value("poc_marker", cfg.poc_marker);
  cfg.sandbox_fixture = doc.value("sandbox_fixture", cfg.sandbox_fixture);
  cfg.shared_entries_per_run = doc.value("shared_entries_per_run", cfg.shared_entries_per_run);
  cfg.shared_entry_max_chars = doc.value("shared_entry_max_chars", cfg.shared_entry_max_chars);
  cfg.search_hit_cap = doc.value("search_hit_cap", cfg.search_hit_cap);
  cfg.read_line_cap = doc.value("read_line_cap", cfg.read_line_cap);
  cfg.search_width_cap = doc.value("search_width_cap", cfg.search_width_cap);
}

inline void apply_env(RunConfig& cfg) {
  if (auto v = env("REFAUDIT_STATE_DIR")) cfg.state_dir = *v;
  if (auto v = env("REFAUDIT_BACKEND")) cfg.backend.kind = *v;
  if (auto v = env("REFAUDIT_BACKEND_ENDPOINT")) cfg.backend.endpoint = *v;
  if (auto v = env("REFAUDIT_BACKEND_FALLBACK")) cfg.backend.fallback_endpoint = *v;
  if (auto v = env("REFAUDIT_BACKEND_MODEL")) cfg.backend.model = *v;
  if (auto v = env("REFAUDIT_BACKEND_API_KEY")) cfg.backend.api_key = *v;
  if (auto v = env("REFAUDIT_BACKEND_FIXTURE")) cfg.backend.fixture = *v;
  if (auto v = env("REFAUDIT_EMBEDDER")) cfg.embedder.kind = *v;
  if (auto v = env("REFAUDIT_EMBEDDER_ENDPOINT")) cfg.embedder.endpoint = *v;
  if (auto v = env("REFAUDIT_TAU_M")) cfg.tau_m = std::stod(*v);
  if (auto v = env("REFAUDIT_KEEP_THRESHOLD")) cfg.keep_threshold = std::stod(*v);
  if (auto v = env("REFAUDIT_MAX_ITERATIONS")) cfg.max_iterations = std::stoi(*v);
  if (auto v = env("REFAUDIT_TURN_BUDGET")) cfg.turn_budget = std::stoi(*v);
  if (auto v = env("REFAUDIT_SANDBOX_MODE")) cfg.sandbox_mode = *v;
  if (auto v = env("REFAUDIT_SANDBOX_FIXTURE")) cfg.sandbox_fixture = *v;
}

}  // namespace detail

// Defaults, then config file, then environment. Flag overrides are applied by
// the CLI layer on top of the result.
inline RunConfig load_config(const std::optional<std::filesystem::path>& file) {
  RunConfig cfg;
  if (file) {
    if (!std::filesystem::exists(*file))
      throw Error(Errc::config, "config file not found: " + file->string());
    detail::apply_file(cfg, *file);
  }
  detail::apply_env(cfg);
  return cfg;
}

}  // namespace refaudit::config
