#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "refaudit/code_facts.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/llm_gateway.hpp"
#include "refaudit/prompts.hpp"
#include "refaudit/repo_semantics.hpp"
#include "refaudit/similarity.hpp"
#include "refaudit/vuln_semantics.hpp"

// Bounded, priority-guided inspection over one target revision: the P1/P2/P3
// partition, externalized inspection memory, the closed tool interface, the
// iteration loop with context compaction, and shared cross-run memory.
namespace refaudit::inspection {

using nlohmann::json;
using taxonomy::Role;

inline constexpr const char* kUnassignedModule = "(unassigned)";

// ---------------------------------------------------------------------------
// priority partition

enum class PromotionReason { name_match, embedding, caller_of_p1, callee_of_p1, remainder };

inline const char* promotion_reason_name(PromotionReason r) {
  switch (r) {
    case PromotionReason::name_match: return "name_match";
    case PromotionReason::embedding: return "embedding";
    case PromotionReason::caller_of_p1: return "caller_of_p1";
    case PromotionReason::callee_of_p1: return "callee_of_p1";
    case PromotionReason::remainder: return "remainder";
  }
  return "remainder";
}

inline PromotionReason promotion_reason_from(const std::string& s) {
  if (s == "name_match") return PromotionReason::name_match;
  if (s == "embedding") return PromotionReason::embedding;
  if (s == "caller_of_p1") return PromotionReason::caller_of_p1;
  if (s == "callee_of_p1") return PromotionReason::callee_of_p1;
  return PromotionReason::remainder;
}

struct PriorityPartition {
  std::set<std::string> p1;
  std::set<std::string> p2;
  std::set<std::string> p3;
  std::vector<std::pair<std::string, PromotionReason>> promotion_log;
  bool degraded = false;  // embedding promotion skipped

  bool operator==(const PriorityPartition&) const = default;
};

// Core partition over explicit inputs: P1 = name matches plus modules whose
// best affected-role similarity reaches tau_M (inclusive); P2 = modules with
// a direct graph edge to or from P1; P3 = the rest plus the unassigned-file
// pseudo-module.
inline PriorityPartition prioritize_with(
    const repo_semantics::RepositorySemantics& target, const std::vector<Role>& affected,
    const std::function<double(const repo_semantics::ModuleDescriptor&, const Role&)>& sim,
    double tau_m) {
  PriorityPartition part;

  for (const auto& m : target.modules) {
    bool name_match =
        std::find(affected.begin(), affected.end(), m.role) != affected.end();
    if (name_match) {
      part.p1.insert(m.id);
      part.promotion_log.push_back({m.id, PromotionReason::name_match});
      continue;
    }
    if (sim) {
      double best = 0.0;
      for (const auto& role : affected) best = std::max(best, sim(m, role));
      if (best >= tau_m) {
        part.p1.insert(m.id);
        part.promotion_log.push_back({m.id, PromotionReason::embedding});
      }
    }
  }

  for (const auto& m : target.modules) {
    if (part.p1.count(m.id)) continue;
    bool caller = false, callee = false;
    for (const auto& e : target.graph.edges) {
      if (e.caller == m.id && part.p1.count(e.callee)) caller = true;
      if (e.callee == m.id && part.p1.count(e.caller)) callee = true;
    }
    if (caller || callee) {
      part.p2.insert(m.id);
      part.promotion_log.push_back(
          {m.id, caller ? PromotionReason::caller_of_p1 : PromotionReason::callee_of_p1});
    }
  }

  for (const auto& m : target.modules) {
    if (part.p1.count(m.id) || part.p2.count(m.id)) continue;
    part.p3.insert(m.id);
    part.promotion_log.push_back({m.id, PromotionReason::remainder});
  }
  if (!target.unassigned.empty()) {
    part.p3.insert(kUnassignedModule);
    part.promotion_log.push_back({kUnassignedModule, PromotionReason::remainder});
  }
  return part;
}

// Production prioritization via the embedding backend. Embedder failure skips
// embedding promotion and returns a name-match-only partition flagged
// degraded.
inline PriorityPartition prioritize(const repo_semantics::RepositorySemantics& target,
                                    const vuln_semantics::VulnerabilitySemantics& vuln,
                                    llm::EmbeddingBackend* embedder, double tau_m,
                                    llm::TokenLedger* ledger = nullptr,
                                    std::vector<std::string>* diagnostics = nullptr) {
  if (vuln.affected_modules.empty())
    throw Error(Errc::precondition, "prioritize requires non-empty affected modules");
  if (embedder) {
    try {
      return prioritize_with(
          target, vuln.affected_modules,
          [&](const repo_semantics::ModuleDescriptor& m, const Role& role) {
            return similarity::module_promotion_sim(m, role, *embedder, ledger);
          },
          tau_m);
    } catch (const Error& e) {
      if (diagnostics)
        diagnostics->push_back(std::string("embedding promotion skipped: ") + e.what());
    }
  }
  auto part = prioritize_with(target, vuln.affected_modules, nullptr, tau_m);
  part.degraded = true;
  return part;
}

// ---------------------------------------------------------------------------
// inspection memory

enum class FileStatus { pending, in_progress, completed };

inline const char* file_status_name(FileStatus s) {
  switch (s) {
    case FileStatus::pending: return "pending";
    case FileStatus::in_progress: return "in_progress";
    case FileStatus::completed: return "completed";
  }
  return "pending";
}

struct FileState {
  FileStatus status = FileStatus::pending;
  std::string reason;  // completion reason

  bool operator==(const FileState&) const = default;
};

enum class Confidence { low, medium, high };

inline const char* confidence_name(Confidence c) {
  switch (c) {
    case Confidence::low: return "low";
    case Confidence::medium: return "medium";
    case Confidence::high: return "high";
  }
  return "low";
}

inline Confidence confidence_from(const std::string& s) {
  if (s == "high") return Confidence::high;
  if (s == "medium") return Confidence::medium;
  return Confidence::low;
}

struct NarrativeStep {
  std::string file;
  std::string symbol;
  vuln_semantics::ChainRole role = vuln_semantics::ChainRole::propagation;
  std::string note;

  bool operator==(const NarrativeStep&) const = default;
};

struct Candidate {
  std::string id;
  std::string file;
  int start_line = 0;
  int end_line = 0;
  std::string function;
  std::vector<NarrativeStep> narrative;  // ordered source -> sink
  std::vector<std::string> static_evidence;
  Confidence confidence = Confidence::low;
  std::string reference_advisory;

  bool operator==(const Candidate&) const = default;

  std::string sink_symbol() const {
    return narrative.empty() ? std::string{} : narrative.back().symbol;
  }
};

inline constexpr int kMemorySchemaVersion = 1;

// The externalized audit state Z. Files never regress from completed, the
// iteration count is capped by the run configuration, and every recorded
// candidate id resolves within the candidates list.
struct InspectionMemory {
  std::string advisory;
  std::string project;
  std::string commit;
  std::map<std::string, FileState> file_status;
  std::map<std::string, std::vector<std::string>> module_of;
  std::vector<std::string> scope_order;  // p1 files, then p2, then p3
  PriorityPartition priorities;
  std::vector<Candidate> candidates;
  std::string scope_boundary;
  int iteration_count = 0;
  std::vector<std::string> rejected_hypotheses;
  std::vector<std::string> diagnostics;

  bool operator==(const InspectionMemory&) const = default;

  const Candidate* find_candidate(const std::string& id) const {
    for (const auto& c : candidates)
      if (c.id == id) return &c;
    return nullptr;
  }

  std::vector<std::string> pending_in(const std::set<std::string>& modules) const {
    std::vector<std::string> out;
    for (const auto& f : scope_order) {
      auto it = file_status.find(f);
      if (it == file_status.end() || it->second.status == FileStatus::completed) continue;
      auto mit = module_of.find(f);
      if (mit == module_of.end()) continue;
      for (const auto& m : mit->second)
        if (modules.count(m)) {
          out.push_back(f);
          break;
        }
    }
    return out;
  }

  bool critical_scope_done() const {
    std::set<std::string> critical = priorities.p1;
    critical.insert(priorities.p2.begin(), priorities.p2.end());
    return pending_in(critical).empty();
  }
};

// Fresh memory: p1 files pending first, then p2, then p3; a file assigned to
// several tiers keeps its highest-tier slot.
inline InspectionMemory init_memory(const repo_semantics::RepositorySemantics& target,
                                    const vuln_semantics::VulnerabilitySemantics& vuln,
                                    const PriorityPartition& partition) {
  InspectionMemory memory;
  memory.advisory = vuln.advisory_id;
  memory.project = target.project;
  memory.commit = target.commit;
  memory.priorities = partition;

  auto add_tier = [&](const std::set<std::string>& tier) {
    std::vector<std::string> module_ids(tier.begin(), tier.end());
    for (const auto& id : module_ids) {
      std::vector<std::string> files;
      if (id == kUnassignedModule) {
        files = target.unassigned;
      } else if (const auto* m = target.find_module(id)) {
        files = m->files;
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto& mods = memory.module_of[f];
        if (std::find(mods.begin(), mods.end(), id) == mods.end()) mods.push_back(id);
        if (!memory.file_status.count(f)) {
          memory.file_status[f] = FileState{};
          memory.scope_order.push_back(f);
        }
      }
    }
  };
  add_tier(partition.p1);
  add_tier(partition.p2);
  add_tier(partition.p3);

  memory.scope_boundary =
      "critical scope = priority 1 and priority 2 files (" +
      std::to_string(memory.pending_in([&] {
                       std::set<std::string> c = partition.p1;
                       c.insert(partition.p2.begin(), partition.p2.end());
                       return c;
                     }())
                         .size()) +
      " files); inspection may stop early only when every critical-scope file is completed; "
      "priority 3 is best effort within the iteration cap";
  return memory;
}

// ---------------------------------------------------------------------------
// memory persistence

inline json candidate_to_json(const Candidate& c) {
  json narrative = json::array();
  for (const auto& s : c.narrative)
    narrative.push_back({{"file", s.file},
                         {"symbol", s.symbol},
                         {"role", vuln_semantics::chain_role_name(s.role)},
                         {"note", s.note}});
  return {{"id", c.id},
          {"file", c.file},
          {"start_line", c.start_line},
          {"end_line", c.end_line},
          {"function", c.function},
          {"narrative", narrative},
          {"static_evidence", c.static_evidence},
          {"confidence", confidence_name(c.confidence)},
          {"reference_advisory", c.reference_advisory}};
}

inline Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.id = j.value("id", "");
  c.file = j.value("file", "");
  c.start_line = j.value("start_line", 0);
  c.end_line = j.value("end_line", 0);
  c.function = j.value("function", "");
  for (const auto& sj : j.value("narrative", json::array())) {
    NarrativeStep s;
    s.file = sj.value("file", "");
    s.symbol = sj.value("symbol", "");
    s.role = vuln_semantics::chain_role_from(sj.value("role", "propagation"));
    s.note = sj.value("note", "");
    c.narrative.push_back(std::move(s));
  }
  c.static_evidence = j.value("static_evidence", std::vector<std::string>{});
  c.confidence = confidence_from(j.value("confidence", "low"));
  c.reference_advisory = j.value("reference_advisory", "");
  return c;
}

inline json memory_to_json(const InspectionMemory& m) {
  json status = json::object();
  for (const auto& [file, state] : m.file_status)
    status[file] = {{"status", file_status_name(state.status)}, {"reason", state.reason}};
  json module_of = json::object();
  for (const auto& [file, mods] : m.module_of) module_of[file] = mods;
  json log = json::array();
  for (const auto& [mod, reason] : m.priorities.promotion_log)
    log.push_back({{"module", mod}, {"reason", promotion_reason_name(reason)}});
  json candidates = json::array();
  for (const auto& c : m.candidates) candidates.push_back(candidate_to_json(c));
  return {{"schema_version", kMemorySchemaVersion},
          {"advisory", m.advisory},
          {"project", m.project},
          {"commit", m.commit},
          {"file_status", status},
          {"module_of", module_of},
          {"scope_order", m.scope_order},
          {"priorities",
           {{"p1", std::vector<std::string>(m.priorities.p1.begin(), m.priorities.p1.end())},
            {"p2", std::vector<std::string>(m.priorities.p2.begin(), m.priorities.p2.end())},
            {"p3", std::vector<std::string>(m.priorities.p3.begin(), m.priorities.p3.end())},
            {"promotion_log", log},
            {"degraded", m.priorities.degraded}}},
          {"candidates", candidates},
          {"scope_boundary", m.scope_boundary},
          {"iteration_count", m.iteration_count},
          {"rejected_hypotheses", m.rejected_hypotheses},
          {"diagnostics", m.diagnostics}};
}

inline InspectionMemory memory_from_json(const json& doc) {
  int version = doc.value("schema_version", 0);
  if (version != kMemorySchemaVersion)
    throw Error(Errc::state, "inspection memory schema version " + std::to_string(version) +
                                 " requires migration to " + std::to_string(kMemorySchemaVersion));
  InspectionMemory m;
  m.advisory = doc.value("advisory", "");
  m.project = doc.value("project", "");
  m.commit = doc.value("commit", "");
  json file_status_doc = doc.value("file_status", json::object());
  for (const auto& [file, st] : file_status_doc.items()) {
    FileState fs;
    std::string s = st.value("status", "pending");
    fs.status = s == "completed"     ? FileStatus::completed
                : s == "in_progress" ? FileStatus::in_progress
                                     : FileStatus::pending;
    fs.reason = st.value("reason", "");
    m.file_status[file] = fs;
  }
  json module_of_doc = doc.value("module_of", json::object());
  for (const auto& [file, mods] : module_of_doc.items())
    m.module_of[file] = mods.get<std::vector<std::string>>();
  m.scope_order = doc.value("scope_order", std::vector<std::string>{});
  const json& p = doc.value("priorities", json::object());
  for (const auto& id : p.value("p1", std::vector<std::string>{})) m.priorities.p1.insert(id);
  for (const auto& id : p.value("p2", std::vector<std::string>{})) m.priorities.p2.insert(id);
  for (const auto& id : p.value("p3", std::vector<std::string>{})) m.priorities.p3.insert(id);
  for (const auto& lj : p.value("promotion_log", json::array()))
    m.priorities.promotion_log.push_back(
        {lj.value("module", ""), promotion_reason_from(lj.value("reason", "remainder"))});
  m.priorities.degraded = p.value("degraded", false);
  for (const auto& cj : doc.value("candidates", json::array()))
    m.candidates.push_back(candidate_from_json(cj));
  m.scope_boundary = doc.value("scope_boundary", "");
  m.iteration_count = doc.value("iteration_count", 0);
  m.rejected_hypotheses = doc.value("rejected_hypotheses", std::vector<std::string>{});
  m.diagnostics = doc.value("diagnostics", std::vector<std::string>{});
  return m;
}

// ---------------------------------------------------------------------------
// shared public memory: append-only cross-run observations

struct SharedEntry {
  std::string project;
  std::string scope_key;  // usually a module id
  std::string observation;
  std::string run_id;

  bool operator==(const SharedEntry&) const = default;
};

class SharedMemoryStore {
 public:
  explicit SharedMemoryStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void append(const std::vector<SharedEntry>& entries, std::size_t max_entry_chars = 2000) {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& e : entries) {
      json line = {{"project", e.project},
                   {"scope_key", e.scope_key},
                   {"observation", util::truncate(e.observation, max_entry_chars)},
                   {"run_id", e.run_id}};
      auto path = file_for(e.project);
      std::filesystem::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::app);
      if (!out) throw Error(Errc::state, "cannot append shared memory: " + path.string());
      out << line.dump() << "\n";
    }
  }

  std::vector<SharedEntry> read(const std::string& project,
                                const std::string& scope_key = "") const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<SharedEntry> out;
    auto path = file_for(project);
    if (!std::filesystem::exists(path)) return out;
    for (const auto& line : util::split_lines(util::read_text_file(path))) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (!j.is_object()) continue;
      SharedEntry e{j.value("project", ""), j.value("scope_key", ""),
                    j.value("observation", ""), j.value("run_id", "")};
      if (scope_key.empty() || e.scope_key == scope_key) out.push_back(std::move(e));
    }
    return out;
  }

 private:
  std::filesystem::path file_for(const std::string& project) const {
    return dir_ / (util::sanitize_key(project) + ".jsonl");
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// tool interface

struct ToolLimits {
  std::size_t search_hit_cap = 200;
  std::size_t read_line_cap = 400;
  std::size_t search_width_cap = 400;
};

// The closed codebase-analysis interface the inspection agent works through.
// All memory updates flow through explicit tool calls; the engine never
// infers completion from prose.
class InspectionToolbox {
 public:
  InspectionToolbox(const code_facts::RepoCheckout& checkout,
                    const repo_semantics::RepositorySemantics& target_sem,
                    InspectionMemory& memory, SharedMemoryStore* shared,
                    ToolLimits limits = {},
                    std::filesystem::path sarif_dir = {})
      : checkout_(checkout),
        target_(target_sem),
        memory_(memory),
        shared_(shared),
        limits_(limits),
        sarif_dir_(std::move(sarif_dir)) {}

  static llm::ToolRegistry registry() {
    llm::ToolRegistry reg;
    reg.add({"list_files_in_folder",
             "List repository files, optionally under one folder.",
             {{"folder", "string", false, "repo-relative folder; empty for the whole tree"}}});
    reg.add({"read_file",
             "Read a file with line numbers, up to the per-call line cap.",
             {{"file", "string", true, "repo-relative path"},
              {"start_line", "integer", false, "1-based first line, default 1"}}});
    reg.add({"search_in_file",
             "Regex search inside one file.",
             {{"file", "string", true, "repo-relative path"},
              {"pattern", "string", true, "regular expression"}}});
    reg.add({"search_in_folder",
             "Regex search across a folder or the whole tree.",
             {{"folder", "string", false, "repo-relative folder; empty for the whole tree"},
              {"pattern", "string", true, "regular expression"}}});
    reg.add({"get_function_code",
             "Extract one function or class body with line numbers.",
             {{"file", "string", true, "repo-relative path"},
              {"name_or_line", "string", true, "qualified name, base name, or a line number"}}});
    reg.add({"get_imports",
             "Imported module names of one file.",
             {{"file", "string", true, "repo-relative path"}}});
    reg.add({"analyze_data_flow",
             "Intraprocedural data propagation summary for one function.",
             {{"file", "string", true, "repo-relative path"},
              {"function", "string", true, "function or method name"}}});
    reg.add({"get_related_files",
             "Files connected to this one through resolved call relations.",
             {{"file", "string", true, "repo-relative path"}}});
    reg.add({"get_module_call_relationships",
             "Module call-graph edges touching one module.",
             {{"module", "string", true, "module id"}}});
    reg.add({"read_sarif_results",
             "Ingest externally produced SARIF findings staged for this target.",
             {{"file", "string", false, "SARIF file name; empty lists staged files"}}});
    reg.add({"read_shared_memory",
             "Prior cross-run observations for this target.",
             {{"scope_key", "string", false, "filter by module id"}}});
    reg.add({"report_candidate",
             "Record a potential vulnerability variant for later verification.",
             {{"file", "string", true, "sink location file"},
              {"start_line", "integer", true, "sink span first line"},
              {"end_line", "integer", true, "sink span last line"},
              {"function", "string", false, "enclosing function"},
              {"narrative", "array", true,
               "ordered steps {file, symbol, role: source|propagation|sink, note}"},
              {"evidence", "array", false, "supporting code excerpts"},
              {"confidence", "string", true, "low | medium | high"}}});
    reg.add({"mark_file_completed",
             "Mark one scoped file as fully inspected.",
             {{"file", "string", true, "repo-relative path"},
              {"reason", "string", true, "completion reason"}}});
    reg.add({"check_file_status",
             "Inspection status of one file.",
             {{"file", "string", true, "repo-relative path"}}});
    reg.add({"record_rejected_hypothesis",
             "Record a checked-and-rejected hypothesis so it is not retried.",
             {{"note", "string", true, "short description of the dead end"}}});
    return reg;
  }

  // Dispatch one validated call. Tool-level failures come back as an error
  // document, not an exception: the agent sees them and can adapt.
  json dispatch(const llm::ToolCallEnvelope& call) {
    try {
      return dispatch_unchecked(call);
    } catch (const Error& e) {
      return {{"error", e.what()}, {"kind", errc_name(e.code())}};
    }
  }

  int candidates_reported() const { return candidates_reported_; }

 private:
  json dispatch_unchecked(const llm::ToolCallEnvelope& call) {
    const json& a = call.args;
    if (call.tool == "list_files_in_folder") {
      std::string folder = a.value("folder", "");
      auto files = code_facts::list_files(
          checkout_, folder.empty() ? std::nullopt : std::optional<std::string>(folder));
      return {{"files", files}};
    }
    if (call.tool == "read_file") {
      std::string file = a.value("file", "");
      int start = a.value("start_line", 1);
      auto lines = util::split_lines(code_facts::read_checkout_file(checkout_, file));
      if (start < 1) start = 1;
      std::vector<std::string> window;
      for (std::size_t i = static_cast<std::size_t>(start) - 1;
           i < lines.size() && window.size() < limits_.read_line_cap; ++i)
        window.push_back(lines[i]);
      bool truncated = lines.size() >= static_cast<std::size_t>(start) - 1 + window.size() &&
                       (static_cast<std::size_t>(start) - 1 + window.size()) < lines.size();
      return {{"file", file},
              {"content", code_facts::render_numbered(window, start)},
              {"total_lines", lines.size()},
              {"truncated", truncated}};
    }
    if (call.tool == "search_in_file" || call.tool == "search_in_folder") {
      std::string scope = call.tool == "search_in_file" ? a.at("file").get<std::string>()
                                                        : a.value("folder", "");
      auto hits = code_facts::search(checkout_, a.at("pattern").get<std::string>(), scope,
                                     limits_.search_hit_cap, limits_.search_width_cap);
      json out = json::array();
      for (const auto& h : hits)
        out.push_back({{"file", h.file}, {"line", h.line}, {"text", h.text}});
      return {{"hits", out}, {"truncated", hits.size() >= limits_.search_hit_cap}};
    }
    if (call.tool == "get_function_code") {
      auto fc = code_facts::get_function_code(checkout_, a.at("file").get<std::string>(),
                                              a.at("name_or_line").get<std::string>());
      return {{"file", fc.fact.file},
              {"qualified_name", fc.fact.qualified_name},
              {"start_line", fc.fact.start_line},
              {"end_line", fc.fact.end_line},
              {"kind", code_facts::symbol_kind_name(fc.fact.kind)},
              {"source", fc.source},
              {"unparsed", fc.unparsed}};
    }
    if (call.tool == "get_imports") {
      return {{"imports", code_facts::get_imports(checkout_, a.at("file").get<std::string>())}};
    }
    if (call.tool == "analyze_data_flow") {
      auto fc = code_facts::get_function_code(checkout_, a.at("file").get<std::string>(),
                                              a.at("function").get<std::string>());
      auto summary = code_facts::analyze_data_flow(checkout_, fc.fact);
      json edges = json::array();
      for (const auto& e : summary.edges)
        edges.push_back({{"from", e.from_symbol},
                         {"to", e.to_symbol},
                         {"via", code_facts::flow_via_name(e.via)}});
      return {{"function", fc.fact.qualified_name},
              {"edges", edges},
              {"unparsed", summary.unparsed}};
    }
    if (call.tool == "get_related_files") {
      ensure_relations();
      std::string file = a.at("file").get<std::string>();
      std::set<std::string> callers, callees;
      for (const auto& rel : relations_) {
        if (rel.caller.file == file && rel.callee_resolved &&
            rel.callee_resolved->file != file)
          callees.insert(rel.callee_resolved->file);
        if (rel.callee_resolved && rel.callee_resolved->file == file &&
            rel.caller.file != file)
          callers.insert(rel.caller.file);
      }
      return {{"callers", std::vector<std::string>(callers.begin(), callers.end())},
              {"callees", std::vector<std::string>(callees.begin(), callees.end())}};
    }
    if (call.tool == "get_module_call_relationships") {
      std::string module = a.at("module").get<std::string>();
      json edges = json::array();
      for (const auto& e : target_.graph.edges)
        if (e.caller == module || e.callee == module)
          edges.push_back({{"caller", e.caller}, {"callee", e.callee}, {"count", e.count}});
      return {{"module", module}, {"edges", edges}};
    }
    if (call.tool == "read_sarif_results") {
      std::string file = a.value("file", "");
      if (sarif_dir_.empty() || !std::filesystem::exists(sarif_dir_))
        return {{"results", json::array()}, {"note", "no SARIF findings staged"}};
      if (file.empty()) {
        std::vector<std::string> names;
        for (const auto& entry : std::filesystem::directory_iterator(sarif_dir_))
          if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());
        return {{"staged_files", names}};
      }
      auto results = code_facts::ingest_sarif(sarif_dir_ / util::sanitize_key(file));
      json out = json::array();
      for (const auto& r : results)
        out.push_back({{"rule_id", r.rule_id},
                       {"file", r.file},
                       {"line", r.line},
                       {"message", r.message}});
      return {{"results", out}};
    }
    if (call.tool == "read_shared_memory") {
      json out = json::array();
      if (shared_)
        for (const auto& e : shared_->read(memory_.project, a.value("scope_key", "")))
          out.push_back({{"scope_key", e.scope_key},
                         {"observation", e.observation},
                         {"run_id", e.run_id}});
      return {{"entries", out}};
    }
    if (call.tool == "report_candidate") return report_candidate(a);
    if (call.tool == "mark_file_completed") {
      std::string file = a.at("file").get<std::string>();
      auto it = memory_.file_status.find(file);
      if (it == memory_.file_status.end())
        return {{"error", "file is not in the inspection scope: " + file}};
      if (it->second.status != FileStatus::completed) {
        it->second.status = FileStatus::completed;
        it->second.reason = a.at("reason").get<std::string>();
      }
      return {{"file", file}, {"status", "completed"}};
    }
    if (call.tool == "check_file_status") {
      std::string file = a.at("file").get<std::string>();
      auto it = memory_.file_status.find(file);
      if (it == memory_.file_status.end()) return {{"file", file}, {"status", "out_of_scope"}};
      return {{"file", file},
              {"status", file_status_name(it->second.status)},
              {"reason", it->second.reason}};
    }
    if (call.tool == "record_rejected_hypothesis") {
      memory_.rejected_hypotheses.push_back(a.at("note").get<std::string>());
      return {{"recorded", true}};
    }
    throw Error(Errc::precondition, "tool not in the closed registry: " + call.tool);
  }

  // Candidate locations must resolve against the checkout at report time;
  // duplicates (same file, overlapping span, same sink) merge keeping the
  // highest confidence.
  json report_candidate(const json& a) {
    Candidate c;
    c.file = a.at("file").get<std::string>();
    c.start_line = a.at("start_line").get<int>();
    c.end_line = a.at("end_line").get<int>();
    c.function = a.value("function", "");
    c.confidence = confidence_from(a.at("confidence").get<std::string>());
    c.reference_advisory = memory_.advisory;
    for (const auto& sj : a.at("narrative")) {
      NarrativeStep s;
      s.file = sj.value("file", "");
      s.symbol = sj.value("symbol", "");
      s.role = vuln_semantics::chain_role_from(sj.value("role", "propagation"));
      s.note = sj.value("note", "");
      c.narrative.push_back(std::move(s));
    }
    for (const auto& e : a.value("evidence", json::array()))
      if (e.is_string()) c.static_evidence.push_back(e.get<std::string>());

    if (!code_facts::file_exists(checkout_, c.file))
      return {{"error", "candidate location does not resolve: no such file " + c.file}};
    if (c.start_line < 1 || c.end_line < c.start_line)
      return {{"error", "candidate location does not resolve: bad line span"}};
    if (c.narrative.size() < 2 ||
        c.narrative.front().role != vuln_semantics::ChainRole::source ||
        c.narrative.back().role != vuln_semantics::ChainRole::sink)
      return {{"error", "candidate narrative must run from a source entry to a sink entry"}};

    // duplicate suppression
    for (auto& existing : memory_.candidates) {
      bool overlap = existing.file == c.file && existing.start_line <= c.end_line &&
                     c.start_line <= existing.end_line &&
                     existing.sink_symbol() == c.sink_symbol();
      if (overlap) {
        if (static_cast<int>(c.confidence) > static_cast<int>(existing.confidence))
          existing.confidence = c.confidence;
        for (const auto& e : c.static_evidence)
          if (std::find(existing.static_evidence.begin(), existing.static_evidence.end(), e) ==
              existing.static_evidence.end())
            existing.static_evidence.push_back(e);
        return {{"candidate_id", existing.id}, {"merged", true}};
      }
    }
    c.id = memory_.advisory + "#" + std::to_string(memory_.candidates.size() + 1);
    memory_.candidates.push_back(c);
    ++candidates_reported_;
    return {{"candidate_id", c.id}, {"merged", false}};
  }

  void ensure_relations() {
    if (!relations_loaded_) {
      relations_ = code_facts::extract_call_relations(checkout_);
      relations_loaded_ = true;
    }
  }

  const code_facts::RepoCheckout& checkout_;
  const repo_semantics::RepositorySemantics& target_;
  InspectionMemory& memory_;
  SharedMemoryStore* shared_;
  ToolLimits limits_;
  std::filesystem::path sarif_dir_;
  std::vector<code_facts::CallRelation> relations_;
  bool relations_loaded_ = false;
  int candidates_reported_ = 0;
};

// ---------------------------------------------------------------------------
// context assembly and compaction

struct TurnBudget {
  int max_tool_calls = 40;
  double context_reserve = 0.20;  // fraction of the window kept free
};

inline std::string build_context(const vuln_semantics::VulnerabilitySemantics& vuln,
                                 const InspectionMemory& memory) {
  const auto& f = vuln.features;
  std::string out;
  out += "# Reference vulnerability (" + vuln.advisory_id + ")\n";
  out += "family: " + f.vuln_family + "\n";
  out += "trigger condition: " + f.trigger_condition + "\n";
  out += "propagation constraints: " + f.propagation_constraints + "\n";
  out += "exploitable scenario: " + f.exploitable_scenario + "\n";
  out += "missing guard: " + f.missing_guard + "\n";
  out += "trust boundary: " + f.trust_boundary + "\n";
  out += "affected modules:";
  for (const auto& r : vuln.affected_modules) out += " [" + r.render() + "]";
  out += "\n\n# Priority tiers\n";
  auto render_tier = [&](const char* name, const std::set<std::string>& tier) {
    out += std::string(name) + ":";
    for (const auto& id : tier) out += " [" + id + "]";
    out += "\n";
  };
  render_tier("P1", memory.priorities.p1);
  render_tier("P2", memory.priorities.p2);
  render_tier("P3", memory.priorities.p3);

  out += "\n# Inspection state (iteration " + std::to_string(memory.iteration_count + 1) + ")\n";
  out += memory.scope_boundary + "\n";
  std::size_t completed = 0;
  for (const auto& [_, st] : memory.file_status)
    if (st.status == FileStatus::completed) ++completed;
  out += "completed files: " + std::to_string(completed) + " of " +
         std::to_string(memory.file_status.size()) + "\n";

  std::set<std::string> critical = memory.priorities.p1;
  critical.insert(memory.priorities.p2.begin(), memory.priorities.p2.end());
  auto remaining = memory.pending_in(critical);
  out += "remaining critical-scope files:";
  for (const auto& fpath : remaining) out += " " + fpath;
  out += "\n";
  auto p3_remaining = memory.pending_in(memory.priorities.p3);
  out += "remaining priority-3 files: " + std::to_string(p3_remaining.size());
  for (std::size_t i = 0; i < std::min<std::size_t>(p3_remaining.size(), 20); ++i)
    out += " " + p3_remaining[i];
  out += "\n";
  if (!memory.candidates.empty()) {
    out += "recorded candidates:\n";
    for (const auto& c : memory.candidates)
      out += "  " + c.id + " @ " + c.file + ":" + std::to_string(c.start_line) + "-" +
             std::to_string(c.end_line) + "\n";
  }
  if (!memory.rejected_hypotheses.empty()) {
    out += "rejected hypotheses:\n";
    for (const auto& h : memory.rejected_hypotheses) out += "  - " + h + "\n";
  }
  return out;
}

struct CompactionResult {
  std::vector<llm::Message> messages;
  bool compacted = false;
  bool hard_truncated = false;
};

// Compaction keeps Z authoritative: the live transcript is replaced by a
// mechanical reasoning summary (tool-call statistics, failures, shared-memory
// hits, candidate reports) plus the most recent message. Memory is read-only
// here; coverage and candidate state survive in Z alone.
inline CompactionResult compact_context(const std::vector<llm::Message>& messages,
                                        const InspectionMemory& memory, int context_window,
                                        double reserve_fraction,
                                        const llm::ToolRegistry* tools = nullptr) {
  CompactionResult result;
  long limit = static_cast<long>(context_window * (1.0 - reserve_fraction));
  long predicted = llm::detail::predicted_request_tokens(messages, tools);
  if (predicted <= limit) {
    result.messages = messages;
    return result;
  }
  result.compacted = true;

  std::map<std::string, int> tool_counts;
  std::vector<std::string> failures;
  std::vector<std::string> shared_hits;
  std::vector<std::string> reports;
  for (const auto& m : messages) {
    if (m.role == "assistant") {
      json j = json::parse(m.content, nullptr, false);
      if (j.is_object())
        for (const auto& call : j.value("tool_calls", json::array()))
          ++tool_counts[call.value("tool", std::string("?"))];
      continue;
    }
    if (m.role != "tool") continue;
    json j = json::parse(m.content, nullptr, false);
    if (!j.is_object()) continue;
    std::string tool = j.value("tool", "");
    const json& r = j.contains("result") ? j["result"] : json::object();
    if (r.is_object() && r.contains("error"))
      failures.push_back(tool + ": " + r.value("error", ""));
    if (tool == "read_shared_memory" && r.is_object())
      for (const auto& e : r.value("entries", json::array()))
        shared_hits.push_back(e.value("scope_key", "") + ": " + e.value("observation", ""));
    if (tool == "report_candidate" && r.is_object() && r.contains("candidate_id"))
      reports.push_back(r.value("candidate_id", ""));
  }

  std::string summary = "# Compact reasoning summary of prior turns\n";
  summary += "tool calls:";
  for (const auto& [tool, count] : tool_counts)
    summary += " " + tool + "=" + std::to_string(count);
  summary += "\nfailures:\n";
  for (const auto& f : failures) summary += "  - " + f + "\n";
  summary += "shared memory hits:\n";
  for (const auto& h : shared_hits) summary += "  - " + h + "\n";
  summary += "candidates reported:";
  for (const auto& r : reports) summary += " " + r;
  summary += "\ncoverage and candidate state live in the inspection memory, which is authoritative.\n";

  llm::Message last = messages.back();
  std::vector<llm::Message> compacted;
  compacted.push_back(messages.front());  // system prompt
  compacted.push_back({"user", summary});
  if (last.role != "system") compacted.push_back(last);

  long size = llm::detail::predicted_request_tokens(compacted, tools);
  if (size > limit) {
    // hard truncation of the oldest material: shrink the summary, then the tail
    result.hard_truncated = true;
    long overshoot = size - limit;
    std::size_t cut_chars = static_cast<std::size_t>(overshoot * 4 + 64);
    std::string& s = compacted[1].content;
    if (s.size() > cut_chars)
      s = "# Compact reasoning summary (truncated)\n" + s.substr(cut_chars);
    else
      s = "# Compact reasoning summary (truncated)\n";
    size = llm::detail::predicted_request_tokens(compacted, tools);
    if (size > limit && compacted.size() > 2) {
      std::string& tail = compacted.back().content;
      long still = size - limit;
      std::size_t keep = tail.size() > static_cast<std::size_t>(still * 4 + 64)
                             ? tail.size() - static_cast<std::size_t>(still * 4 + 64)
                             : 0;
      tail = tail.substr(tail.size() - keep);
    }
  }
  result.messages = std::move(compacted);
  return result;
}

// ---------------------------------------------------------------------------
// the iteration engine

struct EngineConfig {
  int max_iterations = 3;
  TurnBudget turn;
  ToolLimits limits;
  int shared_entries_per_run = 5;
  std::size_t shared_entry_max_chars = 2000;
  std::filesystem::path sarif_dir;
};

class InspectionEngine {
 public:
  InspectionEngine(const code_facts::RepoCheckout& checkout,
                   const repo_semantics::RepositorySemantics& target_sem,
                   const vuln_semantics::VulnerabilitySemantics& vuln,
                   llm::LanguageBackend& backend, SharedMemoryStore* shared,
                   EngineConfig config, llm::TokenLedger* ledger = nullptr)
      : checkout_(checkout),
        target_(target_sem),
        vuln_(vuln),
        backend_(backend),
        shared_(shared),
        config_(std::move(config)),
        ledger_(ledger),
        registry_(InspectionToolbox::registry()) {}

  // One bounded agent turn. The turn ends when the agent stops issuing tool
  // calls, signals completion, or hits the tool/context budget. Backend
  // failures mid-turn keep partial progress, count the iteration, and leave a
  // diagnostic.
  std::vector<Candidate> run_iteration(InspectionMemory& memory) {
    if (memory.iteration_count >= config_.max_iterations)
      throw Error(Errc::precondition, "iteration budget exhausted");

    std::size_t candidates_before = memory.candidates.size();
    InspectionToolbox toolbox(checkout_, target_, memory, shared_, config_.limits,
                              config_.sarif_dir);

    std::vector<llm::Message> messages = {prompts::system_message("inspection"),
                                          llm::make_user(build_context(vuln_, memory))};
    int calls_used = 0;
    try {
      while (true) {
        auto compaction = compact_context(messages, memory, backend_.context_window(),
                                          config_.turn.context_reserve, &registry_);
        messages = std::move(compaction.messages);
        if (compaction.hard_truncated)
          memory.diagnostics.push_back("context hard-truncated during compaction");

        auto reply = llm::chat(backend_, "inspection", messages, &registry_, ledger_,
                               "inspection");
        for (const auto& d : reply.diagnostics) memory.diagnostics.push_back(d);
        json assistant = {{"text", reply.text}, {"tool_calls", json::array()}};
        for (const auto& call : reply.tool_calls)
          assistant["tool_calls"].push_back({{"tool", call.tool}, {"args", call.args}});
        messages.push_back({"assistant", assistant.dump()});

        bool budget_hit = false;
        for (const auto& call : reply.tool_calls) {
          if (calls_used >= config_.turn.max_tool_calls) {
            memory.diagnostics.push_back("turn budget reached; turn truncated");
            budget_hit = true;
            break;
          }
          json result = toolbox.dispatch(call);
          ++calls_used;
          messages.push_back(llm::make_tool_result(
              json({{"call_id", call.call_id}, {"tool", call.tool}, {"result", result}}).dump()));
        }
        if (budget_hit || reply.tool_calls.empty() || reply.complete) break;
      }
    } catch (const Error& e) {
      if (e.code() != Errc::backend) throw;
      memory.diagnostics.push_back(std::string("backend failure mid-turn: ") + e.what());
    }
    memory.iteration_count += 1;

    std::vector<Candidate> fresh(memory.candidates.begin() +
                                     static_cast<std::ptrdiff_t>(candidates_before),
                                 memory.candidates.end());
    return fresh;
  }

  // Distills one finished run into reusable shared-memory entries; failures
  // are non-fatal.
  std::vector<SharedEntry> distill_shared_memory(const InspectionMemory& memory) {
    std::vector<SharedEntry> entries;
    json completed = json::array();
    for (const auto& [file, st] : memory.file_status)
      if (st.status == FileStatus::completed)
        completed.push_back({{"file", file}, {"reason", st.reason}});
    json candidates = json::array();
    for (const auto& c : memory.candidates) candidates.push_back(candidate_to_json(c));
    json request = {{"project", memory.project},
                    {"max_entries", config_.shared_entries_per_run},
                    {"completed_files", completed},
                    {"candidates", candidates},
                    {"rejected_hypotheses", memory.rejected_hypotheses}};
    try {
      auto reply = llm::chat(backend_, "distill",
                             {prompts::system_message("distill"),
                              llm::make_user(request.dump(2))},
                             nullptr, ledger_, "inspection");
      json parsed = json::parse(reply.text, nullptr, false);
      if (!parsed.is_array()) return entries;
      std::string run_id = memory.advisory + "@" + memory.project + "@" + memory.commit;
      for (const auto& e : parsed) {
        if (entries.size() >= static_cast<std::size_t>(config_.shared_entries_per_run)) break;
        if (!e.is_object()) continue;
        entries.push_back({memory.project, e.value("module", ""),
                           util::truncate(e.value("observation", ""),
                                          config_.shared_entry_max_chars),
                           run_id});
      }
    } catch (const Error&) {
      return {};
    }
    return entries;
  }

  // The outer loop of the audit over one target: up to the configured
  // iterations, stopping early once every priority 1 and 2 file is completed.
  // `persist` runs after every iteration so a killed run resumes losslessly.
  std::vector<Candidate> inspect_target(
      InspectionMemory& memory,
      const std::function<void(const InspectionMemory&)>& persist = {}) {
    std::vector<Candidate> collected;
    while (memory.iteration_count < config_.max_iterations && !memory.critical_scope_done()) {
      auto fresh = run_iteration(memory);
      collected.insert(collected.end(), fresh.begin(), fresh.end());
      if (persist) persist(memory);
    }
    if (shared_) {
      auto entries = distill_shared_memory(memory);
      if (!entries.empty()) shared_->append(entries, config_.shared_entry_max_chars);
    }
    return collected;
  }

 private:
  const code_facts::RepoCheckout& checkout_;
  const repo_semantics::RepositorySemantics& target_;
  const vuln_semantics::VulnerabilitySemantics& vuln_;
  llm::LanguageBackend& backend_;
  SharedMemoryStore* shared_;
  EngineConfig config_;
  llm::TokenLedger* ledger_;
  llm::ToolRegistry registry_;
};

}  // namespace refaudit::inspection
