#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "refaudit/code_facts.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/inspection.hpp"
#include "refaudit/llm_gateway.hpp"
#include "refaudit/prompts.hpp"
#include "refaudit/repo_semantics.hpp"
#include "refaudit/sandbox.hpp"
#include "refaudit/vuln_semantics.hpp"

// Candidate verification: static claim checking against target code facts
// under the reference's assumptions, a four-way conclusion, an optional
// sandboxed PoC loop, and report assembly with SARIF export.
namespace refaudit::verification {

using inspection::Candidate;
using nlohmann::json;

enum class ConclusionKind { exploitable, conditionally_exploitable, library_risk, non_exploitable };

inline const char* conclusion_name(ConclusionKind k) {
  switch (k) {
    case ConclusionKind::exploitable: return "exploitable";
    case ConclusionKind::conditionally_exploitable: return "conditionally_exploitable";
    case ConclusionKind::library_risk: return "library_risk";
    case ConclusionKind::non_exploitable: return "non_exploitable";
  }
  return "non_exploitable";
}

inline ConclusionKind conclusion_from(const std::string& s) {
  if (s == "exploitable") return ConclusionKind::exploitable;
  if (s == "conditionally_exploitable") return ConclusionKind::conditionally_exploitable;
  if (s == "library_risk") return ConclusionKind::library_risk;
  return ConclusionKind::non_exploitable;
}

struct Conclusion {
  ConclusionKind kind = ConclusionKind::non_exploitable;
  std::string rationale;
  std::vector<std::string> preconditions;  // non-empty iff conditionally_exploitable

  bool operator==(const Conclusion&) const = default;
};

enum class ClaimStatus { yes, no, unresolved };

inline const char* claim_status_name(ClaimStatus s) {
  switch (s) {
    case ClaimStatus::yes: return "yes";
    case ClaimStatus::no: return "no";
    case ClaimStatus::unresolved: return "unresolved";
  }
  return "unresolved";
}

inline ClaimStatus claim_status_from(const std::string& s) {
  if (s == "yes") return ClaimStatus::yes;
  if (s == "no") return ClaimStatus::no;
  return ClaimStatus::unresolved;
}

// Canonical claim identifiers decomposed from a candidate narrative.
inline constexpr const char* kClaimSource = "source-exists";
inline constexpr const char* kClaimPropagation = "propagation-exists";
inline constexpr const char* kClaimSink = "sink-exists";
inline constexpr const char* kClaimGuardMissing = "guard-missing";
inline constexpr const char* kClaimBoundary = "trust-boundary-crossed";

struct ClaimCheck {
  std::string claim;
  ClaimStatus verified = ClaimStatus::unresolved;
  std::string evidence;

  bool operator==(const ClaimCheck&) const = default;
};

enum class PocOutcome { reached_sink, error, blocked };

inline const char* poc_outcome_name(PocOutcome o) {
  switch (o) {
    case PocOutcome::reached_sink: return "reached_sink";
    case PocOutcome::error: return "error";
    case PocOutcome::blocked: return "blocked";
  }
  return "error";
}

struct PocAttempt {
  std::string description;
  std::string log_digest;  // digest plus a bounded excerpt
  PocOutcome outcome = PocOutcome::error;

  bool operator==(const PocAttempt&) const = default;
};

struct PocRecord {
  std::vector<PocAttempt> attempts;
  int max_attempts = 3;

  bool operator==(const PocRecord&) const = default;

  bool reached_sink() const {
    for (const auto& a : attempts)
      if (a.outcome == PocOutcome::reached_sink) return true;
    return false;
  }
};

struct Finding {
  Candidate candidate;
  Conclusion conclusion;
  std::vector<ClaimCheck> static_checks;
  std::optional<PocRecord> poc;
  std::string reference_advisory;
  bool static_only = false;

  bool operator==(const Finding&) const = default;
};

// ---------------------------------------------------------------------------
// catalogs

// Dependencies whose mere presence marks library risk when no path is
// exposed: unsafe deserializers, shell executors, template engines, raw SQL
// drivers, XML parsers, URL fetchers.
inline const std::set<std::string>& risky_dependency_catalog() {
  static const std::set<std::string> catalog = {
      "pickle",  "dill",       "joblib",   "cloudpickle", "torch",   "marshal",
      "shelve",  "yaml",       "pyyaml",   "jinja2",      "mako",    "lxml",
      "xml",     "os",         "subprocess", "sqlite3",   "duckdb",  "pymysql",
      "psycopg2", "sqlalchemy", "requests", "urllib",     "httpx",   "aiohttp"};
  return catalog;
}

// Guard patterns per vulnerability family keyword. Family matching is a
// lowercase substring test against the reference feature set's family text.
inline const std::vector<std::pair<std::string, std::vector<std::string>>>& guard_catalog() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> catalog = {
      {"deser",
       {R"(weights_only\s*=\s*True)", R"(safe_load)", R"(SafeLoader)", R"(safetensors)"}},
      {"command",
       {R"(shlex\.quote)", R"(shlex\.split)", R"(list2cmdline)"}},
      {"sql",
       {R"(execute\([^)]*,\s*[\(\[])", R"(\bparameterized\b)", R"(\bprepare\()"}},
      {"ssrf",
       {R"(is_safe_url)", R"(validate_url)", R"(allowlist)", R"(allow_list)"}},
      {"xxe",
       {R"(resolve_entities\s*=\s*False)", R"(defusedxml)", R"(no_network\s*=\s*True)"}},
      {"ssti",
       {R"(autoescape\s*=\s*True)", R"(SandboxedEnvironment)"}},
      {"code",
       {R"(ast\.literal_eval)"}},
      {"path",
       {R"(secure_filename)", R"(os\.path\.realpath)"}},
  };
  return catalog;
}

inline std::vector<std::string> guard_patterns_for(const std::string& vuln_family) {
  std::string family = util::lower(vuln_family);
  std::vector<std::string> out;
  for (const auto& [keyword, patterns] : guard_catalog())
    if (family.find(keyword) != std::string::npos)
      out.insert(out.end(), patterns.begin(), patterns.end());
  return out;
}

// Module roles whose files sit on an external trust boundary.
inline bool boundary_role(const taxonomy::Role& role) {
  return role.coarse == "UI and Workflows" || role.coarse == "Serving and Deployment" ||
         (role.coarse == "Agents and Tooling" && role.second == "Tool/Function Calling");
}

// ---------------------------------------------------------------------------
// the verifier

struct VerifierConfig {
  int poc_max_attempts = 3;
  std::string poc_marker = "SINK-REACHED";
};

class Verifier {
 public:
  Verifier(const code_facts::RepoCheckout& checkout,
           const repo_semantics::RepositorySemantics& target_sem,
           const vuln_semantics::VulnerabilitySemantics& vuln, llm::LanguageBackend* backend,
           sandbox::SandboxExecutor* sandbox, VerifierConfig config = {},
           llm::TokenLedger* ledger = nullptr)
      : checkout_(checkout),
        target_(target_sem),
        vuln_(vuln),
        backend_(backend),
        sandbox_(sandbox),
        config_(config),
        ledger_(ledger) {}

  // Decomposes the candidate narrative into the five standard claims and
  // checks each against the checkout. Hallucinated locations come back as
  // verified=no with the failed lookup as evidence. An unreadable checkout is
  // an error; the caller reports the candidate unverifiable.
  std::vector<ClaimCheck> static_check(const Candidate& candidate) const {
    if (!std::filesystem::exists(checkout_.root) ||
        !std::filesystem::is_directory(checkout_.root))
      throw Error(Errc::verification,
                  "checkout unreadable during static check: " + checkout_.root.string());

    std::vector<ClaimCheck> checks;
    if (candidate.narrative.empty()) {
      checks.push_back({kClaimSource, ClaimStatus::no, "candidate carries no narrative"});
      checks.push_back({kClaimSink, ClaimStatus::no, "candidate carries no narrative"});
      return checks;
    }

    auto resolve = [&](const inspection::NarrativeStep& step) -> ClaimCheck {
      ClaimCheck check;
      if (!code_facts::file_exists(checkout_, step.file)) {
        check.verified = ClaimStatus::no;
        check.evidence = "lookup failed: file not in checkout: " + step.file;
        return check;
      }
      if (step.symbol.empty()) {
        check.verified = ClaimStatus::yes;
        check.evidence = "file present: " + step.file;
        return check;
      }
      try {
        auto fc = code_facts::get_function_code(checkout_, step.file, step.symbol);
        check.verified = ClaimStatus::yes;
        check.evidence = step.symbol + " spans " + step.file + ":" +
                         std::to_string(fc.fact.start_line) + "-" +
                         std::to_string(fc.fact.end_line);
        return check;
      } catch (const Error&) {
      }
      std::string escaped;
      for (char c : step.symbol) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') escaped += '\\';
        escaped += c;
      }
      auto hits = code_facts::search(checkout_, escaped, step.file, 1);
      if (!hits.empty()) {
        check.verified = ClaimStatus::yes;
        check.evidence = step.symbol + " found at " + step.file + ":" +
                         std::to_string(hits.front().line) + ": " + hits.front().text;
      } else {
        check.verified = ClaimStatus::no;
        check.evidence = "lookup failed: symbol '" + step.symbol + "' not found in " + step.file;
      }
      return check;
    };

    const auto& source = candidate.narrative.front();
    const auto& sink = candidate.narrative.back();

    ClaimCheck source_check = resolve(source);
    source_check.claim = kClaimSource;
    checks.push_back(source_check);

    // propagation: every interior step resolves; adjacent linkage is
    // best-effort and degrades to unresolved rather than no
    ClaimCheck prop{kClaimPropagation, ClaimStatus::yes, "direct source-to-sink narrative"};
    for (std::size_t i = 1; i + 1 < candidate.narrative.size(); ++i) {
      ClaimCheck step_check = resolve(candidate.narrative[i]);
      if (step_check.verified == ClaimStatus::no) {
        prop.verified = ClaimStatus::no;
        prop.evidence = step_check.evidence;
        break;
      }
      prop.evidence = "all interior steps resolve";
    }
    if (prop.verified == ClaimStatus::yes && candidate.narrative.size() > 2) {
      for (std::size_t i = 0; i + 1 < candidate.narrative.size(); ++i) {
        const auto& from = candidate.narrative[i];
        const auto& to = candidate.narrative[i + 1];
        if (from.file == to.file) continue;
        bool linked = false;
        if (!to.symbol.empty()) {
          std::string escaped;
          for (char c : to.symbol) {
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') escaped += '\\';
            escaped += c;
          }
          linked = !code_facts::search(checkout_, escaped, from.file, 1).empty();
        }
        if (!linked) {
          std::string stem = std::filesystem::path(to.file).stem().generic_string();
          linked = !code_facts::search(checkout_, stem, from.file, 1).empty();
        }
        if (!linked) {
          prop.verified = ClaimStatus::unresolved;
          prop.evidence = "no static link found from " + from.file + " to " + to.file;
          break;
        }
      }
    }
    checks.push_back(prop);

    ClaimCheck sink_check = resolve(sink);
    sink_check.claim = kClaimSink;
    if (sink_check.verified == ClaimStatus::yes &&
        !code_facts::file_exists(checkout_, candidate.file)) {
      sink_check.verified = ClaimStatus::no;
      sink_check.evidence = "lookup failed: candidate location file missing: " + candidate.file;
    }
    checks.push_back(sink_check);

    // guard-missing: yes when no family guard pattern appears near the sink
    ClaimCheck guard{kClaimGuardMissing, ClaimStatus::yes, ""};
    auto patterns = guard_patterns_for(vuln_.features.vuln_family);
    if (patterns.empty()) {
      guard.verified = ClaimStatus::unresolved;
      guard.evidence = "no guard catalog entry for family: " + vuln_.features.vuln_family;
    } else if (code_facts::file_exists(checkout_, sink.file)) {
      for (const auto& pattern : patterns) {
        auto hits = code_facts::search(checkout_, pattern, sink.file, 1);
        if (!hits.empty()) {
          guard.verified = ClaimStatus::no;
          guard.evidence = "guard present at " + hits.front().file + ":" +
                           std::to_string(hits.front().line) + ": " + hits.front().text;
          break;
        }
      }
      if (guard.verified == ClaimStatus::yes)
        guard.evidence = "no guard pattern of family '" + vuln_.features.vuln_family +
                         "' found in " + sink.file;
    } else {
      guard.verified = ClaimStatus::unresolved;
      guard.evidence = "sink file missing; guard state unknown";
    }
    checks.push_back(guard);

    // trust boundary: the source file belongs to a boundary-facing module, or
    // the reference boundary text overlaps the source path
    ClaimCheck boundary{kClaimBoundary, ClaimStatus::unresolved, ""};
    for (const auto& id : target_.modules_of_file(source.file)) {
      if (const auto* m = target_.find_module(id); m && boundary_role(m->role)) {
        boundary.verified = ClaimStatus::yes;
        boundary.evidence = "source file belongs to boundary module " + m->id;
        break;
      }
    }
    if (boundary.verified != ClaimStatus::yes) {
      auto path_tokens = util::word_tokens(source.file);
      for (const auto& tok : util::word_tokens(vuln_.features.trust_boundary)) {
        if (tok.size() < 4) continue;
        if (std::find(path_tokens.begin(), path_tokens.end(), tok) != path_tokens.end()) {
          boundary.verified = ClaimStatus::yes;
          boundary.evidence = "reference boundary term '" + tok + "' matches the source path";
          break;
        }
      }
    }
    if (boundary.verified == ClaimStatus::unresolved)
      boundary.evidence = "no boundary-facing module or boundary term matched the source";
    checks.push_back(boundary);

    return checks;
  }

  bool risky_dependency_present(const Candidate& candidate) const {
    for (const auto& dep : target_.summary.key_dependencies)
      if (risky_dependency_catalog().count(dep)) return true;
    if (!candidate.narrative.empty()) {
      const auto& sink = candidate.narrative.back();
      if (code_facts::file_exists(checkout_, sink.file))
        for (const auto& imp : code_facts::get_imports(checkout_, sink.file))
          if (risky_dependency_catalog().count(imp.substr(0, imp.find('.')))) return true;
    }
    return false;
  }

  // Deterministic gates first: a failed reachability or alignment claim, or a
  // guard found on the path, forces non_exploitable; a confirmed risky sink
  // with an unestablished path is library risk. Only when every claim holds
  // does the backend choose between the two exploitable outcomes, and any
  // unresolved claim caps the conclusion at conditionally exploitable.
  Conclusion classify(const std::vector<ClaimCheck>& checks, const Candidate& candidate) const {
    auto status_of = [&](const char* claim) {
      for (const auto& c : checks)
        if (c.claim == claim) return c.verified;
      return ClaimStatus::unresolved;
    };
    auto evidence_of = [&](const char* claim) -> std::string {
      for (const auto& c : checks)
        if (c.claim == claim) return c.evidence;
      return "";
    };

    if (status_of(kClaimGuardMissing) == ClaimStatus::no)
      return {ConclusionKind::non_exploitable,
              "blocked by an effective protection: " + evidence_of(kClaimGuardMissing),
              {}};
    if (status_of(kClaimSink) == ClaimStatus::no)
      return {ConclusionKind::non_exploitable,
              "sink does not resolve in the target: " + evidence_of(kClaimSink),
              {}};
    for (const char* claim : {kClaimSource, kClaimPropagation, kClaimBoundary}) {
      if (status_of(claim) == ClaimStatus::no)
        return {ConclusionKind::non_exploitable,
                std::string(claim) + " failed verification: " + evidence_of(claim),
                {}};
    }

    bool path_unconfirmed = status_of(kClaimSource) == ClaimStatus::unresolved ||
                            status_of(kClaimPropagation) == ClaimStatus::unresolved;
    if (path_unconfirmed && risky_dependency_present(candidate))
      return {ConclusionKind::library_risk,
              "a risky dependency backs the confirmed sink but the attack path could not be "
              "established",
              {}};

    std::vector<std::string> unresolved;
    for (const auto& c : checks)
      if (c.verified == ClaimStatus::unresolved)
        unresolved.push_back(c.claim + " unresolved: " + c.evidence);

    Conclusion conclusion;
    if (backend_) {
      json claim_doc = json::array();
      for (const auto& c : checks)
        claim_doc.push_back({{"claim", c.claim},
                             {"verified", claim_status_name(c.verified)},
                             {"evidence", c.evidence}});
      json request = {{"candidate", inspection::candidate_to_json(candidate)},
                      {"reference_features",
                       {{"vuln_family", vuln_.features.vuln_family},
                        {"trigger_condition", vuln_.features.trigger_condition},
                        {"exploitable_scenario", vuln_.features.exploitable_scenario}}},
                      {"static_checks", claim_doc}};
      auto parse = [](const std::string& text) -> std::optional<Conclusion> {
        json parsed = json::parse(text, nullptr, false);
        if (!parsed.is_object()) return std::nullopt;
        std::string kind = parsed.value("kind", "");
        if (kind != "exploitable" && kind != "conditionally_exploitable") return std::nullopt;
        Conclusion c;
        c.kind = conclusion_from(kind);
        c.rationale = parsed.value("rationale", "");
        c.preconditions = parsed.value("preconditions", std::vector<std::string>{});
        if (c.kind == ConclusionKind::conditionally_exploitable && c.preconditions.empty())
          return std::nullopt;
        return c;
      };
      std::vector<llm::Message> messages = {prompts::system_message("classify"),
                                            llm::make_user(request.dump(2))};
      auto reply = llm::chat(*backend_, "classify", messages, nullptr, ledger_, "verification");
      auto parsed = parse(reply.text);
      if (!parsed) {
        messages.push_back({"assistant", reply.text});
        messages.push_back(llm::make_user(
            "The reply violated the schema. Respond with {\"kind\": \"exploitable\" | "
            "\"conditionally_exploitable\", \"rationale\": ..., \"preconditions\": [...]}; "
            "conditionally_exploitable requires at least one precondition."));
        auto retry = llm::chat(*backend_, "classify", messages, nullptr, ledger_, "verification");
        parsed = parse(retry.text);
        if (!parsed)
          throw Error(Errc::schema, "classification failed schema validation twice; raw output: " +
                                        util::truncate(retry.text, 1000));
      }
      conclusion = *parsed;
    } else {
      conclusion.kind = ConclusionKind::conditionally_exploitable;
      conclusion.rationale = "no classification backend configured; conservative default";
      conclusion.preconditions = {"manual review required"};
    }

    if (!unresolved.empty() && conclusion.kind == ConclusionKind::exploitable) {
      conclusion.kind = ConclusionKind::conditionally_exploitable;
      conclusion.rationale += " (capped: unresolved claims remain)";
    }
    if (conclusion.kind == ConclusionKind::conditionally_exploitable)
      for (const auto& u : unresolved) conclusion.preconditions.push_back(u);
    if (conclusion.kind == ConclusionKind::conditionally_exploitable &&
        conclusion.preconditions.empty())
      conclusion.preconditions.push_back("explicit input preconditions required");
    return conclusion;
  }

  // Up to max_attempts PoC generations; each runs in the sandbox and the sink
  // counts as reached only when the instrumented marker shows up in the log.
  // Errors feed the next attempt's prompt.
  PocRecord attempt_poc(const Candidate& candidate, const Conclusion& conclusion) const {
    if (conclusion.kind != ConclusionKind::exploitable &&
        conclusion.kind != ConclusionKind::conditionally_exploitable)
      throw Error(Errc::precondition, "PoC attempts require an exploitable-leaning conclusion");
    if (!sandbox_) throw Error(Errc::precondition, "PoC attempts require a sandbox executor");
    if (!backend_) throw Error(Errc::precondition, "PoC attempts require a language backend");

    PocRecord record;
    record.max_attempts = config_.poc_max_attempts;
    std::string prior_log;
    for (int attempt = 0; attempt < config_.poc_max_attempts; ++attempt) {
      json request = {{"candidate", inspection::candidate_to_json(candidate)},
                      {"sink_marker", config_.poc_marker},
                      {"target_root", checkout_.root.generic_string()},
                      {"attempt", attempt + 1}};
      if (!prior_log.empty()) request["previous_attempt_log"] = prior_log;
      auto reply = llm::chat(*backend_, "poc",
                             {prompts::system_message("poc"),
                              llm::make_user(request.dump(2))},
                             nullptr, ledger_, "verification");
      json parsed = json::parse(reply.text, nullptr, false);
      std::string script = parsed.is_object() ? parsed.value("script", "") : "";
      std::string description =
          parsed.is_object() ? parsed.value("description", "") : "unparseable PoC reply";

      PocAttempt record_attempt;
      record_attempt.description = description;
      if (script.empty()) {
        record_attempt.outcome = PocOutcome::error;
        record_attempt.log_digest = util::digest("no script") + " | backend produced no script";
        record.attempts.push_back(std::move(record_attempt));
        prior_log = "backend produced no script";
        continue;
      }
      auto result = sandbox_->run(script);
      record_attempt.log_digest =
          util::digest(result.log) + " | " + util::truncate(result.log, 200);
      if (result.log.find(config_.poc_marker) != std::string::npos)
        record_attempt.outcome = PocOutcome::reached_sink;
      else if (result.exit_code != 0 || result.timed_out || !result.started)
        record_attempt.outcome = PocOutcome::error;
      else
        record_attempt.outcome = PocOutcome::blocked;
      prior_log = util::truncate(result.log, 2000);
      record.attempts.push_back(std::move(record_attempt));
      if (record.attempts.back().outcome == PocOutcome::reached_sink) break;
    }
    return record;
  }

  // Full verification of one candidate: static checks, classification, and
  // the PoC loop when exploitability is indicated and a sandbox is available.
  // A PoC that never reaches the sink and was affirmatively blocked downgrades
  // the conclusion to non_exploitable.
  Finding verify(const Candidate& candidate) const {
    Finding finding;
    finding.candidate = candidate;
    finding.reference_advisory = candidate.reference_advisory.empty()
                                     ? vuln_.advisory_id
                                     : candidate.reference_advisory;
    finding.static_checks = static_check(candidate);
    finding.conclusion = classify(finding.static_checks, candidate);

    bool exploitable_leaning =
        finding.conclusion.kind == ConclusionKind::exploitable ||
        finding.conclusion.kind == ConclusionKind::conditionally_exploitable;
    if (exploitable_leaning) {
      if (sandbox_ && backend_) {
        finding.poc = attempt_poc(candidate, finding.conclusion);
        bool any_blocked = false;
        for (const auto& a : finding.poc->attempts)
          if (a.outcome == PocOutcome::blocked) any_blocked = true;
        if (!finding.poc->reached_sink() && any_blocked) {
          finding.conclusion.kind = ConclusionKind::non_exploitable;
          finding.conclusion.rationale +=
              " (downgraded: sandbox attempts were blocked before the sink)";
          finding.conclusion.preconditions.clear();
        } else if (finding.poc->reached_sink()) {
          finding.conclusion.rationale += " (PoC reached the instrumented sink)";
        }
      } else {
        finding.static_only = true;
      }
    }
    return finding;
  }

 private:
  const code_facts::RepoCheckout& checkout_;
  const repo_semantics::RepositorySemantics& target_;
  const vuln_semantics::VulnerabilitySemantics& vuln_;
  llm::LanguageBackend* backend_;
  sandbox::SandboxExecutor* sandbox_;
  VerifierConfig config_;
  llm::TokenLedger* ledger_;
};

// ---------------------------------------------------------------------------
// findings persistence and report assembly

inline constexpr int kFindingsSchemaVersion = 1;

inline json finding_to_json(const Finding& f) {
  json checks = json::array();
  for (const auto& c : f.static_checks)
    checks.push_back({{"claim", c.claim},
                      {"verified", claim_status_name(c.verified)},
                      {"evidence", c.evidence}});
  json out = {{"candidate", inspection::candidate_to_json(f.candidate)},
              {"conclusion",
               {{"kind", conclusion_name(f.conclusion.kind)},
                {"rationale", f.conclusion.rationale},
                {"preconditions", f.conclusion.preconditions}}},
              {"static_checks", checks},
              {"reference_advisory", f.reference_advisory},
              {"static_only", f.static_only}};
  if (f.poc) {
    json attempts = json::array();
    for (const auto& a : f.poc->attempts)
      attempts.push_back({{"description", a.description},
                          {"log_digest", a.log_digest},
                          {"outcome", poc_outcome_name(a.outcome)}});
    out["poc"] = {{"attempts", attempts}, {"max_attempts", f.poc->max_attempts}};
  }
  return out;
}

inline Finding finding_from_json(const json& j) {
  Finding f;
  f.candidate = inspection::candidate_from_json(j.value("candidate", json::object()));
  const json& c = j.value("conclusion", json::object());
  f.conclusion.kind = conclusion_from(c.value("kind", "non_exploitable"));
  f.conclusion.rationale = c.value("rationale", "");
  f.conclusion.preconditions = c.value("preconditions", std::vector<std::string>{});
  for (const auto& cj : j.value("static_checks", json::array()))
    f.static_checks.push_back({cj.value("claim", ""),
                               claim_status_from(cj.value("verified", "unresolved")),
                               cj.value("evidence", "")});
  f.reference_advisory = j.value("reference_advisory", "");
  f.static_only = j.value("static_only", false);
  if (j.contains("poc")) {
    PocRecord rec;
    rec.max_attempts = j["poc"].value("max_attempts", 3);
    for (const auto& aj : j["poc"].value("attempts", json::array())) {
      PocAttempt a;
      a.description = aj.value("description", "");
      a.log_digest = aj.value("log_digest", "");
      std::string o = aj.value("outcome", "error");
      a.outcome = o == "reached_sink" ? PocOutcome::reached_sink
                  : o == "blocked"    ? PocOutcome::blocked
                                      : PocOutcome::error;
      rec.attempts.push_back(std::move(a));
    }
    f.poc = std::move(rec);
  }
  return f;
}

struct UnverifiableCandidate {
  Candidate candidate;
  std::string reason;
};

struct Report {
  json document;
  std::string rendered;
};

// One report per (advisory, target revision): per-finding claim tables and
// conclusions, PoC digests, coverage from the inspection memory, and
// per-stage token accounting. Machine-readable and rendered forms agree on
// all counts.
inline Report assemble_report(const std::string& advisory, const std::string& project,
                              const std::string& commit, const std::vector<Finding>& findings,
                              const std::vector<UnverifiableCandidate>& unverifiable = {},
                              const inspection::InspectionMemory* memory = nullptr,
                              const llm::TokenLedger* ledger = nullptr) {
  Report report;
  json findings_doc = json::array();
  bool any_static_only = false;
  std::map<std::string, int> kind_counts;
  for (const auto& f : findings) {
    findings_doc.push_back(finding_to_json(f));
    ++kind_counts[conclusion_name(f.conclusion.kind)];
    if (f.static_only) any_static_only = true;
  }
  json unverifiable_doc = json::array();
  for (const auto& u : unverifiable)
    unverifiable_doc.push_back(
        {{"candidate", inspection::candidate_to_json(u.candidate)}, {"reason", u.reason}});

  json coverage = json::object();
  if (memory) {
    std::size_t completed = 0;
    for (const auto& [_, st] : memory->file_status)
      if (st.status == inspection::FileStatus::completed) ++completed;
    coverage = {{"files_in_scope", memory->file_status.size()},
                {"files_completed", completed},
                {"iterations", memory->iteration_count},
                {"critical_scope_done", memory->critical_scope_done()},
                {"scope_boundary", memory->scope_boundary}};
  }

  report.document = {{"schema_version", kFindingsSchemaVersion},
                     {"advisory", advisory},
                     {"target", {{"project", project}, {"commit", commit}}},
                     {"findings", findings_doc},
                     {"unverifiable", unverifiable_doc},
                     {"conclusion_counts", kind_counts},
                     {"coverage", coverage},
                     {"static_only", any_static_only},
                     {"token_usage", ledger ? ledger->to_json() : json::object()}};

  std::string& text = report.rendered;
  text += "Variant audit report\n";
  text += "advisory: " + advisory + "\n";
  text += "target: " + project + "@" + commit + "\n";
  if (any_static_only) text += "NOTE: static-only verification (no sandbox execution)\n";
  text += "findings: " + std::to_string(findings.size()) + "\n";
  for (const auto& f : findings) {
    text += "\n[" + std::string(conclusion_name(f.conclusion.kind)) + "] " + f.candidate.id +
            " @ " + f.candidate.file + ":" + std::to_string(f.candidate.start_line) + "-" +
            std::to_string(f.candidate.end_line) + "\n";
    text += "  rationale: " + f.conclusion.rationale + "\n";
    for (const auto& p : f.conclusion.preconditions) text += "  precondition: " + p + "\n";
    for (const auto& c : f.static_checks)
      text += "  claim " + c.claim + ": " + claim_status_name(c.verified) + " — " + c.evidence +
              "\n";
    if (f.poc)
      for (const auto& a : f.poc->attempts)
        text += "  poc attempt (" + std::string(poc_outcome_name(a.outcome)) + "): " +
                a.log_digest + "\n";
  }
  text += "\nunverifiable candidates: " + std::to_string(unverifiable.size()) + "\n";
  for (const auto& u : unverifiable)
    text += "  " + u.candidate.id + ": " + u.reason + "\n";
  if (memory) {
    text += "coverage: " + coverage["files_completed"].dump() + "/" +
            coverage["files_in_scope"].dump() + " files, iterations " +
            std::to_string(memory->iteration_count) + "\n";
    if (findings.empty() && unverifiable.empty())
      text += "clean scan: no candidates survived inspection\n";
  }
  return report;
}

// SARIF 2.1.0 export of findings for interop with code-scanning consumers.
inline json sarif_export(const std::string& advisory, const std::vector<Finding>& findings) {
  auto level_of = [](ConclusionKind k) {
    switch (k) {
      case ConclusionKind::exploitable: return "error";
      case ConclusionKind::conditionally_exploitable: return "warning";
      case ConclusionKind::library_risk: return "note";
      case ConclusionKind::non_exploitable: return "none";
    }
    return "none";
  };
  json results = json::array();
  for (const auto& f : findings) {
    results.push_back(
        {{"ruleId", advisory},
         {"level", level_of(f.conclusion.kind)},
         {"message",
          {{"text", std::string(conclusion_name(f.conclusion.kind)) + ": " +
                        f.conclusion.rationale}}},
         {"locations",
          json::array({{{"physicalLocation",
                         {{"artifactLocation", {{"uri", f.candidate.file}}},
                          {"region",
                           {{"startLine", f.candidate.start_line},
                            {"endLine", f.candidate.end_line}}}}}}})}});
  }
  return {{"$schema", "https://json.schemastore.org/sarif-2.1.0.json"},
          {"version", "2.1.0"},
          {"runs",
           json::array({{{"tool",
                          {{"driver",
                            {{"name", "refaudit"},
                             {"rules", json::array({{{"id", advisory}}})}}}}},
                         {"results", results}}})}};
}

}  // namespace refaudit::verification
