#pragma once

#include <errno.h>
#include <signal.h>
#include <unistd.h>

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "refaudit/code_facts.hpp"
#include "refaudit/config.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/http_backend.hpp"
#include "refaudit/inspection.hpp"
#include "refaudit/llm_gateway.hpp"
#include "refaudit/repo_semantics.hpp"
#include "refaudit/sandbox.hpp"
#include "refaudit/similarity.hpp"
#include "refaudit/taxonomy.hpp"
#include "refaudit/verification.hpp"
#include "refaudit/vuln_semantics.hpp"

// Operator-facing pipeline: the state directory layout, stage gating, and the
// profile / extract-vuln / select / inspect / verify / report commands.
namespace refaudit::pipeline {

using config::RunConfig;
using nlohmann::json;

// Stable, documented exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitBackend = 3,
  kExitVerification = 4,
  kExitState = 5,
};

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::config: return kExitConfig;
    case Errc::backend: return kExitBackend;
    case Errc::verification:
    case Errc::schema: return kExitVerification;
    case Errc::state:
    case Errc::not_found: return kExitState;
    default: return kExitUsage;
  }
}

// ---------------------------------------------------------------------------
// state directory

class StateStore {
 public:
  explicit StateStore(std::filesystem::path root) : root_(std::move(root)) {
    namespace fs = std::filesystem;
    for (const char* sub :
         {"profiles", "vulns", "memory", "shared", "findings", "reports", "sarif", "sandbox",
          "ledger"})
      fs::create_directories(root_ / sub);
  }

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path profiles() const { return root_ / "profiles"; }
  std::filesystem::path vulns() const { return root_ / "vulns"; }
  std::filesystem::path shared() const { return root_ / "shared"; }
  std::filesystem::path findings_dir() const { return root_ / "findings"; }
  std::filesystem::path reports() const { return root_ / "reports"; }
  std::filesystem::path sandbox_dir() const { return root_ / "sandbox"; }

  std::filesystem::path sarif_dir(const std::string& project, const std::string& commit) const {
    return root_ / "sarif" / (util::sanitize_key(project) + "@" + util::sanitize_key(commit));
  }

  std::string target_key(const std::string& advisory, const std::string& project,
                         const std::string& commit) const {
    return util::sanitize_key(advisory) + "@" + util::sanitize_key(project) + "@" +
           util::sanitize_key(commit);
  }

  std::filesystem::path memory_path(const std::string& advisory, const std::string& project,
                                    const std::string& commit) const {
    return root_ / "memory" / (target_key(advisory, project, commit) + ".json");
  }

  std::filesystem::path findings_path(const std::string& advisory, const std::string& project,
                                      const std::string& commit) const {
    return findings_dir() / (target_key(advisory, project, commit) + ".json");
  }

  std::filesystem::path ledger_path(const std::string& advisory) const {
    return root_ / "ledger" / (util::sanitize_key(advisory) + ".json");
  }

  bool has_profile(const std::string& project, const std::string& commit) const {
    return std::filesystem::exists(
        repo_semantics::semantics_path(profiles(), project, commit));
  }

  // Accumulates this process's ledger into the advisory's persisted stage
  // totals so cross-process runs keep exact accounting.
  void accumulate_ledger(const std::string& advisory, const llm::TokenLedger& ledger) const {
    json doc = json::object();
    auto path = ledger_path(advisory);
    if (std::filesystem::exists(path))
      doc = json::parse(util::read_text_file(path), nullptr, false);
    if (!doc.is_object()) doc = json::object();
    json stages = ledger.to_json();
    for (const auto& [stage, use] : stages.items()) {
      long in = use.value("input_tokens", 0L) + doc[stage].value("input_tokens", 0L);
      long out = use.value("output_tokens", 0L) + doc[stage].value("output_tokens", 0L);
      doc[stage] = {{"input_tokens", in}, {"output_tokens", out}};
    }
    util::write_text_file(path, doc.dump(2));
  }

  json load_ledger(const std::string& advisory) const {
    auto path = ledger_path(advisory);
    if (!std::filesystem::exists(path)) return json::object();
    json doc = json::parse(util::read_text_file(path), nullptr, false);
    return doc.is_object() ? doc : json::object();
  }

 private:
  std::filesystem::path root_;
};

// One process owns the state directory. A lock left by a dead process is
// reclaimed; a live owner is a state error.
class StateLock {
 public:
  explicit StateLock(const std::filesystem::path& state_dir)
      : path_(state_dir / ".lock") {
    std::filesystem::create_directories(state_dir);
    if (std::filesystem::exists(path_)) {
      pid_t owner = 0;
      try {
        owner = static_cast<pid_t>(std::stol(util::read_text_file(path_)));
      } catch (...) {
        owner = 0;
      }
      if (owner > 0 && kill(owner, 0) == 0 && owner != getpid())
        throw Error(Errc::state, "state directory locked by running process " +
                                     std::to_string(owner));
      std::filesystem::remove(path_);
    }
    util::write_text_file(path_, std::to_string(getpid()));
  }

  ~StateLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

  StateLock(const StateLock&) = delete;
  StateLock& operator=(const StateLock&) = delete;

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// backend construction

struct Backends {
  std::unique_ptr<llm::LanguageBackend> language;
  std::unique_ptr<llm::EmbeddingBackend> embedder;
  std::unique_ptr<llm::TokenLedger> ledger = std::make_unique<llm::TokenLedger>();
};

inline Backends make_backends(const RunConfig& cfg) {
  Backends b;
  if (cfg.backend.kind == "scripted") {
    if (!cfg.backend.fixture.empty())
      b.language = llm::ScriptedBackend::from_file(cfg.backend.fixture);
    else
      b.language = std::make_unique<llm::ScriptedBackend>(cfg.backend.context_window);
  } else {
    if (cfg.backend.endpoint.empty())
      throw Error(Errc::config, "http backend requires backend.endpoint");
    b.language = std::make_unique<llm::HttpBackend>(
        llm::HttpEndpoint{cfg.backend.endpoint, cfg.backend.model, cfg.backend.api_key},
        cfg.backend.context_window,
        llm::DecodingConfig{cfg.backend.temperature, cfg.backend.top_p},
        llm::HttpEndpoint{cfg.backend.fallback_endpoint, cfg.backend.model,
                          cfg.backend.api_key});
  }
  if (cfg.embedder.kind == "hashed") {
    b.embedder = std::make_unique<llm::HashedEmbedder>();
  } else {
    if (cfg.embedder.endpoint.empty())
      throw Error(Errc::config, "http embedder requires embedder.endpoint");
    b.embedder = std::make_unique<llm::HttpEmbedder>(
        llm::HttpEndpoint{cfg.embedder.endpoint, cfg.embedder.model, ""},
        llm::HttpEndpoint{cfg.embedder.fallback_endpoint, cfg.embedder.model, ""});
  }
  return b;
}

inline std::unique_ptr<sandbox::SandboxExecutor> make_sandbox(const RunConfig& cfg,
                                                              const StateStore& store) {
  if (cfg.sandbox_mode == "off") return nullptr;
  if (cfg.sandbox_mode == "fake") {
    if (!cfg.sandbox_fixture.empty())
      return std::make_unique<sandbox::FakeSandbox>(
          sandbox::FakeSandbox::from_file(cfg.sandbox_fixture));
    return std::make_unique<sandbox::FakeSandbox>();
  }
  return std::make_unique<sandbox::SubprocessSandbox>(store.sandbox_dir());
}

inline repo_semantics::RepositorySemantics require_profile(const StateStore& store,
                                                           const std::string& project,
                                                           const std::string& commit,
                                                           const std::string& needed_for) {
  if (!store.has_profile(project, commit))
    throw Error(Errc::state, "missing stage for " + needed_for + ": profile " + project + "@" +
                                 commit + " not found; run `refaudit profile` first");
  return repo_semantics::load_semantics(store.profiles(), project, commit);
}

inline vuln_semantics::VulnerabilitySemantics require_vuln(const StateStore& store,
                                                           const std::string& advisory,
                                                           const std::string& needed_for) {
  if (!std::filesystem::exists(vuln_semantics::vuln_path(store.vulns(), advisory)))
    throw Error(Errc::state, "missing stage for " + needed_for + ": vulnerability semantics for " +
                                 advisory + " not found; run `refaudit extract-vuln` first");
  return vuln_semantics::load_vuln(store.vulns(), advisory);
}

// ---------------------------------------------------------------------------
// commands

inline int cmd_profile(const RunConfig& cfg, const std::string& repo,
                       const std::string& project, const std::string& commit, bool fresh,
                       std::ostream& out) {
  StateStore store(cfg.state_dir);
  StateLock lock(cfg.state_dir);
  if (!fresh && store.has_profile(project, commit)) {
    out << "profile cached: " << project << "@" << commit << " (use --fresh to re-profile)\n";
    return kExitOk;
  }
  code_facts::RepoCheckout checkout(repo, project, commit);
  auto backends = make_backends(cfg);
  auto sem = repo_semantics::profile_repository(checkout, taxonomy::RoleTaxonomy::builtin(),
                                                backends.language.get(), backends.ledger.get());
  auto path = repo_semantics::persist_semantics(sem, store.profiles());
  out << "profiled " << project << "@" << commit << ": " << sem.modules.size() << " modules, "
      << sem.unassigned.size() << " unassigned files, " << sem.graph.edges.size()
      << " module edges\n";
  out << "tokens in/out: " << sem.tokens_in << "/" << sem.tokens_out << "\n";
  out << "stored: " << path.generic_string() << "\n";
  for (const auto& d : sem.diagnostics) out << "diagnostic: " << d << "\n";
  return kExitOk;
}

inline int cmd_extract_vuln(const RunConfig& cfg, const std::string& reference_doc,
                            const std::string& repo, bool fresh, std::ostream& out) {
  StateStore store(cfg.state_dir);
  StateLock lock(cfg.state_dir);

  json doc;
  try {
    doc = json::parse(util::read_text_file(reference_doc));
  } catch (const json::parse_error& e) {
    throw Error(Errc::format, std::string("malformed reference document: ") + e.what());
  }
  std::string project = doc.value("project", "");
  std::string commit = doc.value("commit", "");
  if (project.empty() || commit.empty())
    throw Error(Errc::format, "reference document must name 'project' and 'commit'");

  std::string advisory = doc.value("advisory_id", "");
  if (!fresh && !advisory.empty() &&
      std::filesystem::exists(vuln_semantics::vuln_path(store.vulns(), advisory))) {
    out << "vulnerability semantics cached: " << advisory << " (use --fresh to re-extract)\n";
    return kExitOk;
  }

  auto ref_sem = require_profile(store, project, commit, "extract-vuln");
  code_facts::RepoCheckout checkout(repo, project, commit);
  auto chain = vuln_semantics::parse_reference(doc, &checkout);

  auto backends = make_backends(cfg);
  auto vuln = vuln_semantics::build_vulnerability_semantics(chain, ref_sem, checkout,
                                                            *backends.language, backends.ledger.get());
  auto path = vuln_semantics::persist_vuln(vuln, store.vulns());
  store.accumulate_ledger(vuln.advisory_id, *backends.ledger);

  out << "extracted " << vuln.advisory_id << ": family '" << vuln.features.vuln_family << "', "
      << vuln.chain.entries.size() << "-entry chain, " << vuln.affected_modules.size()
      << " affected module role(s)\n";
  for (const auto& r : vuln.affected_modules) out << "  affected: " << r.render() << "\n";
  for (const auto& d : vuln.chain.diagnostics) out << "diagnostic: " << d << "\n";
  out << "stored: " << path.generic_string() << "\n";
  return kExitOk;
}

inline int cmd_select(const RunConfig& cfg, const std::string& advisory, std::ostream& out) {
  StateStore store(cfg.state_dir);
  StateLock lock(cfg.state_dir);
  auto vuln = require_vuln(store, advisory, "select");
  auto ref = require_profile(store, vuln.reference_project, vuln.reference_commit, "select");

  std::vector<repo_semantics::RepositorySemantics> candidates;
  for (const auto& entry : std::filesystem::directory_iterator(store.profiles())) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    auto sem = repo_semantics::semantics_from_json(
        json::parse(util::read_text_file(entry.path())));
    if (sem.project == ref.project && sem.commit == ref.commit) continue;
    candidates.push_back(std::move(sem));
  }
  if (candidates.empty()) {
    out << "selection empty: no profiled target revisions besides the reference; profile "
           "candidate repositories first\n";
    return kExitOk;
  }

  auto backends = make_backends(cfg);
  auto selection = similarity::select_targets(ref, candidates, *backends.embedder,
                                              backends.ledger.get(), cfg.keep_threshold,
                                              cfg.supplement_size);
  store.accumulate_ledger(advisory, *backends.ledger);

  json listing = {{"schema_version", 1},
                  {"advisory", advisory},
                  {"rule_applied", similarity::selection_rule_name(selection.rule_applied)},
                  {"ranked", json::array()},
                  {"selected", json::array()}};
  for (const auto& c : selection.ranked)
    listing["ranked"].push_back({{"project", c.project},
                                 {"commit", c.commit},
                                 {"overall", c.score.overall},
                                 {"description_sim", c.score.description_sim},
                                 {"application_sim", c.score.application_sim},
                                 {"user_sim", c.score.user_sim},
                                 {"module_jaccard", c.score.module_jaccard},
                                 {"dependency_jaccard", c.score.dependency_jaccard}});
  for (const auto& c : selection.selected)
    listing["selected"].push_back({{"project", c.project}, {"commit", c.commit}});
  if (selection.extra_same_project)
    listing["extra_same_project"] = {{"project", selection.extra_same_project->first},
                                     {"commit", selection.extra_same_project->second}};
  util::write_text_file(store.reports() / ("selection-" + util::sanitize_key(advisory) + ".json"),
                        listing.dump(2));

  out << "selection rule: " << similarity::selection_rule_name(selection.rule_applied) << "\n";
  for (const auto& c : selection.ranked) {
    bool chosen = std::any_of(selection.selected.begin(), selection.selected.end(),
                              [&](const auto& s) {
                                return s.project == c.project && s.commit == c.commit;
                              });
    std::ostringstream overall;
    overall.precision(4);
    overall << std::fixed << c.score.overall;
    out << (chosen ? "  [selected] " : "  [        ] ") << c.project << "@" << c.commit
        << " overall=" << overall.str() << "\n";
  }
  if (selection.extra_same_project)
    out << "  [extra   ] " << selection.extra_same_project->first << "@"
        << selection.extra_same_project->second << " (same-project alternate revision)\n";
  return kExitOk;
}

inline int cmd_inspect(const RunConfig& cfg, const std::string& advisory,
                       const std::string& project, const std::string& commit,
                       const std::string& repo, bool fresh, std::ostream& out) {
  StateStore store(cfg.state_dir);
  StateLock lock(cfg.state_dir);
  auto vuln = require_vuln(store, advisory, "inspect");
  auto target_sem = require_profile(store, project, commit, "inspect");
  code_facts::RepoCheckout checkout(repo, project, commit);

  auto memory_path = store.memory_path(advisory, project, commit);
  std::optional<inspection::InspectionMemory> memory;
  if (std::filesystem::exists(memory_path)) {
    if (fresh) {
      std::filesystem::remove(memory_path);
    } else {
      memory = inspection::memory_from_json(json::parse(util::read_text_file(memory_path)));
      if (memory->iteration_count >= cfg.max_iterations || memory->critical_scope_done()) {
        out << "inspection already complete: " << memory->candidates.size()
            << " candidate(s), " << memory->iteration_count
            << " iteration(s) (use --fresh to restart)\n";
        return kExitOk;
      }
      out << "resuming inspection at iteration " << memory->iteration_count + 1 << "\n";
    }
  }

  auto backends = make_backends(cfg);
  if (!memory) {
    auto partition = inspection::prioritize(target_sem, vuln, backends.embedder.get(), cfg.tau_m,
                                            backends.ledger.get());
    memory = inspection::init_memory(target_sem, vuln, partition);
  }

  inspection::SharedMemoryStore shared(store.shared());
  inspection::EngineConfig engine_cfg;
  engine_cfg.max_iterations = cfg.max_iterations;
  engine_cfg.turn.max_tool_calls = cfg.turn_budget;
  engine_cfg.turn.context_reserve = cfg.context_reserve;
  engine_cfg.limits = {static_cast<std::size_t>(cfg.search_hit_cap),
                       static_cast<std::size_t>(cfg.read_line_cap),
                       static_cast<std::size_t>(cfg.search_width_cap)};
  engine_cfg.shared_entries_per_run = cfg.shared_entries_per_run;
  engine_cfg.shared_entry_max_chars = static_cast<std::size_t>(cfg.shared_entry_max_chars);
  engine_cfg.sarif_dir = store.sarif_dir(project, commit);

  inspection::InspectionEngine engine(checkout, target_sem, vuln, *backends.language, &shared,
                                      engine_cfg, backends.ledger.get());
  engine.inspect_target(*memory, [&](const inspection::InspectionMemory& m) {
    util::write_text_file(memory_path, inspection::memory_to_json(m).dump(2));
  });
  util::write_text_file(memory_path, inspection::memory_to_json(*memory).dump(2));
  store.accumulate_ledger(advisory, *backends.ledger);

  std::size_t completed = 0;
  for (const auto& [_, st] : memory->file_status)
    if (st.status == inspection::FileStatus::completed) ++completed;
  out << "inspection finished after " << memory->iteration_count << " iteration(s): "
      << memory->candidates.size() << " candidate(s), " << completed << "/"
      << memory->file_status.size() << " files completed\n";
  for (const auto& c : memory->candidates)
    out << "  candidate " << c.id << " @ " << c.file << ":" << c.start_line << "-" << c.end_line
        << " (" << inspection::confidence_name(c.confidence) << ")\n";
  if (memory->candidates.empty()) out << "clean scan: no candidates reported\n";
  return kExitOk;
}

inline int cmd_verify(const RunConfig& cfg, const std::string& advisory,
                      const std::string& project, const std::string& commit,
                      const std::string& repo, bool fresh, std::ostream& out) {
  StateStore store(cfg.state_dir);
  StateLock lock(cfg.state_dir);
  auto vuln = require_vuln(store, advisory, "verify");
  auto target_sem = require_profile(store, project, commit, "verify");

  auto memory_path = store.memory_path(advisory, project, commit);
  if (!std::filesystem::exists(memory_path))
    throw Error(Errc::state, "missing stage for verify: no inspection memory for " + advisory +
                                 " on " + project + "@" + commit +
                                 "; run `refaudit inspect` first");
  auto memory = inspection::memory_from_json(json::parse(util::read_text_file(memory_path)));

  auto findings_path = store.findings_path(advisory, project, commit);
  if (!fresh && std::filesystem::exists(findings_path)) {
    out << "findings cached: " << findings_path.generic_string()
        << " (use --fresh to re-verify)\n";
    return kExitOk;
  }

  code_facts::RepoCheckout checkout(repo, project, commit);
  auto backends = make_backends(cfg);
  auto sandbox_exec = make_sandbox(cfg, store);

  verification::VerifierConfig vcfg;
  vcfg.poc_max_attempts = cfg.poc_max_attempts;
  vcfg.poc_marker = cfg.poc_marker;
  verification::Verifier verifier(checkout, target_sem, vuln, backends.language.get(),
                                  sandbox_exec.get(), vcfg, backends.ledger.get());

  std::vector<verification::Finding> findings;
  std::vector<verification::UnverifiableCandidate> unverifiable;
  for (const auto& candidate : memory.candidates) {
    try {
      findings.push_back(verifier.verify(candidate));
    } catch (const Error& e) {
      if (e.code() == Errc::backend || e.code() == Errc::schema) throw;
      unverifiable.push_back({candidate, e.what()});
    }
  }
  store.accumulate_ledger(advisory, *backends.ledger);

  json findings_doc = {{"schema_version", verification::kFindingsSchemaVersion},
                       {"advisory", advisory},
                       {"project", project},
                       {"commit", commit},
                       {"findings", json::array()},
                       {"unverifiable", json::array()}};
  for (const auto& f : findings)
    findings_doc["findings"].push_back(verification::finding_to_json(f));
  for (const auto& u : unverifiable)
    findings_doc["unverifiable"].push_back(
        {{"candidate", inspection::candidate_to_json(u.candidate)}, {"reason", u.reason}});
  util::write_text_file(findings_path, findings_doc.dump(2));

  llm::TokenLedger report_ledger;  // stage totals accumulated across processes
  auto ledger_doc = store.load_ledger(advisory);
  for (const auto& [stage, use] : ledger_doc.items())
    report_ledger.record(stage, use.value("input_tokens", 0L), use.value("output_tokens", 0L));

  auto report = verification::assemble_report(advisory, project, commit, findings, unverifiable,
                                              &memory, &report_ledger);
  std::string base = store.target_key(advisory, project, commit);
  util::write_text_file(store.reports() / (base + ".json"), report.document.dump(2));
  util::write_text_file(store.reports() / (base + ".txt"), report.rendered);
  util::write_text_file(store.reports() / (base + ".sarif"),
                        verification::sarif_export(advisory, findings).dump(2));

  out << report.rendered;
  out << "stored: " << (store.reports() / (base + ".json")).generic_string() << "\n";
  return kExitOk;
}

inline int cmd_report(const RunConfig& cfg, const std::string& advisory, std::ostream& out) {
  StateStore store(cfg.state_dir);
  StateLock lock(cfg.state_dir);
  auto vuln = require_vuln(store, advisory, "report");

  json consolidated = {{"schema_version", 1},
                       {"advisory", advisory},
                       {"reference",
                        {{"project", vuln.reference_project},
                         {"commit", vuln.reference_commit},
                         {"vuln_family", vuln.features.vuln_family}}},
                       {"targets", json::array()},
                       {"missing_stages", json::array()},
                       {"token_usage", store.load_ledger(advisory)}};
  std::string rendered = "Consolidated variant audit: " + advisory + "\n";

  std::size_t total_findings = 0;
  std::string prefix = util::sanitize_key(advisory) + "@";
  std::vector<std::filesystem::path> memory_files;
  for (const auto& entry : std::filesystem::directory_iterator(store.root() / "memory"))
    if (entry.is_regular_file() && entry.path().filename().string().starts_with(prefix))
      memory_files.push_back(entry.path());
  std::sort(memory_files.begin(), memory_files.end());

  for (const auto& memory_file : memory_files) {
    auto memory = inspection::memory_from_json(
        json::parse(util::read_text_file(memory_file)));
    json target = {{"project", memory.project},
                   {"commit", memory.commit},
                   {"candidates", memory.candidates.size()},
                   {"iterations", memory.iteration_count}};
    auto findings_path = store.findings_path(advisory, memory.project, memory.commit);
    if (std::filesystem::exists(findings_path)) {
      json doc = json::parse(util::read_text_file(findings_path));
      target["findings"] = doc.value("findings", json::array());
      total_findings += target["findings"].size();
      rendered += "\n" + memory.project + "@" + memory.commit + ": " +
                  std::to_string(target["findings"].size()) + " finding(s)\n";
      for (const auto& fj : target["findings"])
        rendered += "  [" + fj["conclusion"].value("kind", "") + "] " +
                    fj["candidate"].value("file", "") + ":" +
                    std::to_string(fj["candidate"].value("start_line", 0)) + "\n";
    } else {
      consolidated["missing_stages"].push_back(
          {{"project", memory.project}, {"commit", memory.commit}, {"missing", "verify"}});
      rendered += "\n" + memory.project + "@" + memory.commit +
                  ": inspection done, verification missing\n";
    }
    consolidated["targets"].push_back(std::move(target));
  }
  if (memory_files.empty()) {
    consolidated["missing_stages"].push_back({{"missing", "inspect"}});
    rendered += "no inspected targets yet\n";
  }
  consolidated["total_findings"] = total_findings;
  rendered += "\ntotal findings: " + std::to_string(total_findings) + "\n";

  auto base = store.reports() / util::sanitize_key(advisory);
  util::write_text_file(base.string() + ".json", consolidated.dump(2));
  util::write_text_file(base.string() + ".txt", rendered);
  out << rendered;
  out << "stored: " << base.generic_string() << ".json\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// CLI entry

inline int cli_main(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"reference-driven vulnerability variant auditing"};
  app.require_subcommand(1);

  std::string config_file;
  std::string state_dir;
  std::string backend_kind, backend_fixture, embedder_kind, sandbox_mode;
  double tau_m = -1.0, keep_threshold = -1.0;
  int max_iterations = -1, turn_budget = -1;

  app.add_option("--config", config_file, "config file (JSON)");
  app.add_option("--state-dir", state_dir, "state directory");
  app.add_option("--backend", backend_kind, "language backend kind: scripted | http");
  app.add_option("--backend-fixture", backend_fixture, "scripted backend fixture document");
  app.add_option("--embedder", embedder_kind, "embedding backend kind: hashed | http");
  app.add_option("--tau-m", tau_m, "module promotion similarity threshold");
  app.add_option("--keep-threshold", keep_threshold, "target selection keep threshold");
  app.add_option("--max-iterations", max_iterations, "inspection iterations per repository");
  app.add_option("--turn-budget", turn_budget, "tool calls per inspection iteration");
  app.add_option("--sandbox", sandbox_mode, "sandbox mode: container | fake | off");

  std::string repo, project, commit, reference_doc, advisory;
  bool fresh = false;

  auto* profile = app.add_subcommand("profile", "extract and persist repository semantics");
  profile->add_option("--repo", repo, "checkout directory")->required();
  profile->add_option("--project", project, "project name")->required();
  profile->add_option("--commit", commit, "commit or revision id")->required();
  profile->add_flag("--fresh", fresh, "re-profile even when cached");

  auto* extract = app.add_subcommand("extract-vuln",
                                     "derive vulnerability semantics from a reference document");
  extract->add_option("--reference", reference_doc, "reference advisory document")->required();
  extract->add_option("--repo", repo, "reference checkout directory")->required();
  extract->add_flag("--fresh", fresh, "re-extract even when cached");

  auto* select = app.add_subcommand("select", "rank profiled revisions against the reference");
  select->add_option("--advisory", advisory, "advisory id")->required();

  auto* inspect = app.add_subcommand("inspect", "run the bounded inspection loop on one target");
  inspect->add_option("--advisory", advisory, "advisory id")->required();
  inspect->add_option("--project", project, "target project name")->required();
  inspect->add_option("--commit", commit, "target commit id")->required();
  inspect->add_option("--repo", repo, "target checkout directory")->required();
  inspect->add_flag("--fresh", fresh, "restart inspection from scratch");

  auto* verify = app.add_subcommand("verify", "verify recorded candidates and emit the report");
  verify->add_option("--advisory", advisory, "advisory id")->required();
  verify->add_option("--project", project, "target project name")->required();
  verify->add_option("--commit", commit, "target commit id")->required();
  verify->add_option("--repo", repo, "target checkout directory")->required();
  verify->add_flag("--fresh", fresh, "re-verify even when findings exist");

  auto* report = app.add_subcommand("report", "consolidate findings across targets");
  report->add_option("--advisory", advisory, "advisory id")->required();

  std::vector<const char*> argv;
  argv.push_back("refaudit");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    auto cfg = config::load_config(
        config_file.empty() ? std::nullopt
                            : std::optional<std::filesystem::path>(config_file));
    if (!state_dir.empty()) cfg.state_dir = state_dir;
    if (!backend_kind.empty()) cfg.backend.kind = backend_kind;
    if (!backend_fixture.empty()) cfg.backend.fixture = backend_fixture;
    if (!embedder_kind.empty()) cfg.embedder.kind = embedder_kind;
    if (!sandbox_mode.empty()) cfg.sandbox_mode = sandbox_mode;
    if (tau_m >= 0.0) cfg.tau_m = tau_m;
    if (keep_threshold >= 0.0) cfg.keep_threshold = keep_threshold;
    if (max_iterations > 0) cfg.max_iterations = max_iterations;
    if (turn_budget > 0) cfg.turn_budget = turn_budget;
    cfg.validate();

    if (profile->parsed()) return cmd_profile(cfg, repo, project, commit, fresh, out);
    if (extract->parsed()) return cmd_extract_vuln(cfg, reference_doc, repo, fresh, out);
    if (select->parsed()) return cmd_select(cfg, advisory, out);
    if (inspect->parsed()) return cmd_inspect(cfg, advisory, project, commit, repo, fresh, out);
    if (verify->parsed()) return cmd_verify(cfg, advisory, project, commit, repo, fresh, out);
    if (report->parsed()) return cmd_report(cfg, advisory, out);
    err << "no subcommand\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << errc_name(e.code()) << " error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace refaudit::pipeline
