#pragma once

#include <stdexcept>
#include <string>

namespace refaudit {

enum class Errc {
  config,        // bad configuration or flag values
  precondition,  // caller violated an operation precondition
  not_found,     // missing file, function, profile, or stage artifact
  pattern,       // regex failed to compile
  format,        // malformed input document (SARIF, fixtures, stored docs)
  schema,        // stored or generated document violates its schema
  backend,       // language/embedding backend failure
  state,         // state directory problems: locks, stage gating, migration
  verification,  // verification stage failure
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::config: return "config";
    case Errc::precondition: return "precondition";
    case Errc::not_found: return "not-found";
    case Errc::pattern: return "pattern";
    case Errc::format: return "format";
    case Errc::schema: return "schema";
    case Errc::backend: return "backend";
    case Errc::state: return "state";
    case Errc::verification: return "verification";
  }
  return "unknown";
}

}  // namespace refaudit
