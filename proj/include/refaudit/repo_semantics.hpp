#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "refaudit/code_facts.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/llm_gateway.hpp"
#include "refaudit/prompts.hpp"
#include "refaudit/taxonomy.hpp"
#include "refaudit/util.hpp"

// Repository semantics: taxonomy-constrained module assignment, per-module
// descriptors, a module call graph projected from call relations, and a
// compact repository summary used for cross-repository comparison.
namespace refaudit::repo_semantics {

using nlohmann::json;
using taxonomy::Role;

struct ModuleDescriptor {
  std::string id;  // role rendering, optionally "@ <package>" when split
  Role role;
  std::string label;
  std::vector<std::string> files;  // sorted, repo-relative
  std::vector<code_facts::FunctionFact> funcs;
  std::vector<std::string> deps;  // sorted external dependency roots
  std::string feature_notes;
  std::map<std::string, int> assigned_by;  // file -> pass (1 or 2)

  bool operator==(const ModuleDescriptor&) const = default;
};

struct ModuleEdge {
  std::string caller;
  std::string callee;
  int count = 0;

  bool operator==(const ModuleEdge&) const = default;
};

struct ModuleCallGraph {
  std::vector<std::string> nodes;
  std::vector<ModuleEdge> edges;  // no self loops; intra-module calls dropped

  bool operator==(const ModuleCallGraph&) const = default;
};

struct RepositorySummary {
  std::string description;
  std::string application_scenario;
  std::string target_user;
  std::vector<std::string> key_dependencies;  // sorted, deduplicated
  bool degraded = false;

  bool operator==(const RepositorySummary&) const = default;
};

struct RepositorySemantics {
  std::string project;
  std::string commit;
  std::string root;  // informational; reload requires a live checkout path
  RepositorySummary summary;
  std::vector<ModuleDescriptor> modules;
  std::vector<std::string> unassigned;  // source files with no module
  ModuleCallGraph graph;
  long tokens_in = 0;
  long tokens_out = 0;
  std::vector<std::string> diagnostics;

  bool operator==(const RepositorySemantics&) const = default;

  std::set<std::string> role_set() const {
    std::set<std::string> out;
    for (const auto& m : modules) out.insert(m.role.render());
    return out;
  }

  const ModuleDescriptor* find_module(const std::string& id) const {
    for (const auto& m : modules)
      if (m.id == id) return &m;
    return nullptr;
  }

  std::vector<std::string> modules_of_file(const std::string& file) const {
    std::vector<std::string> out;
    for (const auto& m : modules)
      if (std::find(m.files.begin(), m.files.end(), file) != m.files.end())
        out.push_back(m.id);
    return out;
  }
};

// ---------------------------------------------------------------------------
// pass-1 heuristics

namespace detail {

// Path-segment keyword table for confident pass-1 assignment. Directory
// segments win over file-stem tokens; a unique candidate role is confident,
// anything else goes to the backend pass.
inline const std::vector<std::pair<std::string, Role>>& keyword_roles() {
  static const std::vector<std::pair<std::string, Role>> table = {
      {"webui", {"UI and Workflows", "Web UI"}},
      {"web_ui", {"UI and Workflows", "Web UI"}},
      {"gradio", {"UI and Workflows", "Web UI"}},
      {"frontend", {"UI and Workflows", "Web UI"}},
      {"ui", {"UI and Workflows", "Web UI"}},
      {"workflow", {"UI and Workflows", "Workflow Builder"}},
      {"workflows", {"UI and Workflows", "Workflow Builder"}},
      {"cli", {"UI and Workflows", "CLI/Developer Workflows"}},
      {"console", {"UI and Workflows", "CLI/Developer Workflows"}},
      {"commands", {"UI and Workflows", "CLI/Developer Workflows"}},
      {"examples", {"UI and Workflows", "Templates/Examples"}},
      {"templates", {"UI and Workflows", "Templates/Examples"}},
      {"demo", {"UI and Workflows", "Templates/Examples"}},
      {"train", {"Training and Optimization", "Training Loop"}},
      {"training", {"Training and Optimization", "Training Loop"}},
      {"trainer", {"Training and Optimization", "Training Loop"}},
      {"optim", {"Training and Optimization", "Optimizer Schedules"}},
      {"optimizer", {"Training and Optimization", "Optimizer Schedules"}},
      {"scheduler", {"Training and Optimization", "Optimizer Schedules"}},
      {"checkpoint", {"Model Assets and Loading", "Checkpoint Formats"}},
      {"checkpoints", {"Model Assets and Loading", "Checkpoint Formats"}},
      {"ckpt", {"Model Assets and Loading", "Checkpoint Formats"}},
      {"loader", {"Model Assets and Loading", "Loading Configuration"}},
      {"loading", {"Model Assets and Loading", "Loading Configuration"}},
      {"models", {"Model Assets and Loading", "Model Definition"}},
      {"model", {"Model Assets and Loading", "Model Definition"}},
      {"tokenizer", {"Model Assets and Loading", "Tokenizers/Processors"}},
      {"export", {"Model Assets and Loading", "Export Interchange"}},
      {"onnx", {"Model Assets and Loading", "Export Interchange"}},
      {"peft", {"Post-Training and Alignment", "Parameter Efficient Finetuning"}},
      {"lora", {"Post-Training and Alignment", "Parameter Efficient Finetuning"}},
      {"adapters", {"Post-Training and Alignment", "Parameter Efficient Finetuning"}},
      {"sft", {"Post-Training and Alignment", "Supervised Finetuning"}},
      {"finetune", {"Post-Training and Alignment", "Supervised Finetuning"}},
      {"rlhf", {"Post-Training and Alignment", "RLHF/RLAIF"}},
      {"dpo", {"Post-Training and Alignment", "Preference Learning"}},
      {"infer", {"Inference and Acceleration", "Inference Runtime"}},
      {"inference", {"Inference and Acceleration", "Inference Runtime"}},
      {"kernels", {"Inference and Acceleration", "Quantized Kernels"}},
      {"serve", {"Serving and Deployment", "Serving API"}},
      {"serving", {"Serving and Deployment", "Serving API"}},
      {"server", {"Serving and Deployment", "Serving API"}},
      {"api", {"Serving and Deployment", "Serving API"}},
      {"deploy", {"Serving and Deployment", "Deployment Assets"}},
      {"deployment", {"Serving and Deployment", "Deployment Assets"}},
      {"auth", {"Serving and Deployment", "Authentication/Rate Limiting"}},
      {"rag", {"RAG and Retrieval", "Retrieval/Reranking"}},
      {"retrieval", {"RAG and Retrieval", "Retrieval/Reranking"}},
      {"retriever", {"RAG and Retrieval", "Retrieval/Reranking"}},
      {"embedding", {"RAG and Retrieval", "Embedding/Indexing"}},
      {"embeddings", {"RAG and Retrieval", "Embedding/Indexing"}},
      {"index", {"RAG and Retrieval", "Embedding/Indexing"}},
      {"chunking", {"RAG and Retrieval", "Document Loaders/Chunking"}},
      {"agent", {"Agents and Tooling", "Planning/Orchestration"}},
      {"agents", {"Agents and Tooling", "Planning/Orchestration"}},
      {"planner", {"Agents and Tooling", "Planning/Orchestration"}},
      {"tools", {"Agents and Tooling", "Tool/Function Calling"}},
      {"tool", {"Agents and Tooling", "Tool/Function Calling"}},
      {"plugins", {"Agents and Tooling", "Integrations/Plugins"}},
      {"integrations", {"Agents and Tooling", "Integrations/Plugins"}},
      {"memory", {"Agents and Tooling", "Memory State"}},
      {"datasets", {"Data Knowledge", "Dataset Construction"}},
      {"dataset", {"Data Knowledge", "Dataset Construction"}},
      {"data", {"Data Knowledge", "Dataset Construction"}},
      {"preprocess", {"Data Knowledge", "Preprocess Tokenization"}},
      {"storage", {"Data Knowledge", "Storage Formats"}},
      {"store", {"Data Knowledge", "Knowledge Stores"}},
      {"ingest", {"Data Knowledge", "Ingestion Connectors"}},
      {"connectors", {"Data Knowledge", "Ingestion Connectors"}},
      {"tests", {"Evaluation and Benchmarking", "Regression Tests"}},
      {"test", {"Evaluation and Benchmarking", "Regression Tests"}},
      {"eval", {"Evaluation and Benchmarking", "Quality Evaluation"}},
      {"evaluation", {"Evaluation and Benchmarking", "Quality Evaluation"}},
      {"benchmark", {"Evaluation and Benchmarking", "Performance Evaluation"}},
      {"benchmarks", {"Evaluation and Benchmarking", "Performance Evaluation"}},
      {"logging", {"Observability and LLMOps", "Tracing/Metrics/Logs"}},
      {"metrics", {"Observability and LLMOps", "Tracing/Metrics/Logs"}},
      {"tracing", {"Observability and LLMOps", "Tracing/Metrics/Logs"}},
      {"registry", {"Observability and LLMOps", "Model Registry"}},
      {"tracking", {"Observability and LLMOps", "Experiment Tracking"}},
      {"docker", {"Platform Systems", "Build Packaging"}},
      {"build", {"Platform Systems", "Build Packaging"}},
      {"setup", {"Platform Systems", "Build Packaging"}},
      {"distributed", {"Platform Systems", "Distributed Orchestration"}},
      {"launcher", {"Platform Systems", "Distributed Orchestration"}},
      {"device", {"Platform Systems", "Runtime Hardware"}},
      {"cuda", {"Platform Systems", "Runtime Hardware"}},
  };
  return table;
}

inline std::vector<Role> roles_for_tokens(const std::vector<std::string>& tokens) {
  std::vector<Role> out;
  for (const auto& tok : tokens)
    for (const auto& [kw, role] : keyword_roles())
      if (tok == kw && std::find(out.begin(), out.end(), role) == out.end())
        out.push_back(role);
  return out;
}

// Deepest matching directory segment decides; file-stem tokens apply only
// when no directory segment matched at all.
inline std::optional<Role> pass1_role(const std::string& file) {
  std::filesystem::path p(file);
  std::vector<std::string> dirs;
  for (const auto& part : p.parent_path()) dirs.push_back(part.generic_string());
  for (auto it = dirs.rbegin(); it != dirs.rend(); ++it) {
    auto roles = roles_for_tokens(util::word_tokens(*it));
    if (roles.size() == 1) return roles[0];
    if (roles.size() > 1) return std::nullopt;  // conflicting directory cues
  }
  auto stem_roles = roles_for_tokens(util::word_tokens(p.stem().generic_string()));
  if (stem_roles.size() == 1) return stem_roles[0];
  return std::nullopt;
}

// Python standard library roots, used to keep key_dependencies external.
inline const std::set<std::string>& python_stdlib() {
  static const std::set<std::string> stdlib = {
      "abc", "argparse", "array", "ast", "asyncio", "base64", "bisect", "builtins",
      "collections", "configparser", "contextlib", "copy", "csv", "ctypes", "dataclasses",
      "datetime", "decimal", "dis", "enum", "errno", "fnmatch", "fractions", "functools",
      "gc", "getpass", "gettext", "glob", "gzip", "hashlib", "heapq", "html", "http",
      "importlib", "inspect", "io", "itertools", "json", "keyword", "locale", "logging",
      "marshal", "math", "multiprocessing", "numbers", "operator", "os", "pathlib",
      "pickle", "platform", "pprint", "queue", "random", "re", "secrets", "select",
      "shlex", "shutil", "signal", "site", "socket", "sqlite3", "stat", "statistics",
      "string", "struct", "subprocess", "sys", "tarfile", "tempfile", "textwrap",
      "threading", "time", "token", "tokenize", "traceback", "types", "typing",
      "unicodedata", "unittest", "urllib", "uuid", "warnings", "weakref", "xml",
      "zipfile", "zlib"};
  return stdlib;
}

inline std::string import_root(const std::string& module) {
  return module.substr(0, module.find('.'));
}

// Top-level package/module names of the checkout itself; imports of these are
// internal, not dependencies.
inline std::set<std::string> self_packages(const std::vector<std::string>& files) {
  std::set<std::string> out;
  for (const auto& f : files) {
    std::filesystem::path p(f);
    auto it = p.begin();
    if (it == p.end()) continue;
    std::string head = it->generic_string();
    if (head.ends_with(".py")) head = head.substr(0, head.size() - 3);
    out.insert(head);
  }
  return out;
}

}  // namespace detail

struct AssignmentResult {
  std::vector<ModuleDescriptor> modules;
  std::vector<std::string> unassigned;
  std::vector<std::string> diagnostics;
};

inline std::vector<std::string> source_files(const code_facts::RepoCheckout& checkout) {
  std::vector<std::string> out;
  for (const auto& f : code_facts::list_files(checkout))
    if (code_facts::is_python_file(f)) out.push_back(f);
  return out;
}

// Two-pass module assignment. Pass 1 assigns confident files from path
// structure; pass 2 batches the ambiguous remainder to the backend with
// source snippets, 20 files per request. Backend failures leave those files
// unassigned and recorded, never dropped.
inline AssignmentResult assign_modules(const code_facts::RepoCheckout& checkout,
                                       const taxonomy::RoleTaxonomy& taxonomy,
                                       llm::LanguageBackend* backend,
                                       llm::TokenLedger* ledger = nullptr) {
  constexpr std::size_t kBatchSize = 20;
  constexpr std::size_t kSnippetLines = 30;
  constexpr std::size_t kSplitThreshold = 200;
  constexpr std::size_t kFuncsPerModule = 30;

  AssignmentResult result;
  auto files = source_files(checkout);

  std::map<std::string, std::vector<std::pair<std::string, int>>> role_files;  // render -> (file,pass)
  std::map<std::string, Role> role_by_render;
  std::map<std::string, std::vector<std::string>> role_notes;
  std::vector<std::string> ambiguous;

  for (const auto& f : files) {
    if (auto role = detail::pass1_role(f)) {
      role_files[role->render()].push_back({f, 1});
      role_by_render[role->render()] = *role;
    } else {
      ambiguous.push_back(f);
    }
  }

  std::set<std::string> still_unassigned(ambiguous.begin(), ambiguous.end());
  if (!ambiguous.empty() && backend) {
    json taxonomy_doc = json::array();
    for (const auto& cat : taxonomy.categories())
      taxonomy_doc.push_back({{"category", cat.name}, {"roles", cat.second_level}});

    for (std::size_t offset = 0; offset < ambiguous.size(); offset += kBatchSize) {
      std::size_t end = std::min(offset + kBatchSize, ambiguous.size());
      json batch = json::array();
      for (std::size_t i = offset; i < end; ++i) {
        std::string text = code_facts::read_checkout_file(checkout, ambiguous[i]);
        auto lines = util::split_lines(text);
        lines.resize(std::min(lines.size(), kSnippetLines));
        batch.push_back({{"file", ambiguous[i]}, {"snippet", util::join(lines, "\n")}});
      }
      json request = {{"taxonomy", taxonomy_doc}, {"files", batch}};
      try {
        auto reply = llm::chat(*backend, "module-assign",
                               {prompts::system_message("module-assign"),
                                llm::make_user(request.dump(2))},
                               nullptr, ledger, "profiling");
        json parsed = json::parse(reply.text, nullptr, false);
        if (!parsed.is_array()) {
          result.diagnostics.push_back("module-assign batch reply not a JSON array; files kept unassigned");
          continue;
        }
        for (const auto& entry : parsed) {
          if (!entry.contains("file") || !entry.contains("roles")) continue;
          std::string file = entry["file"].get<std::string>();
          if (!still_unassigned.count(file)) continue;
          bool assigned = false;
          for (const auto& role_pair : entry["roles"]) {
            if (!role_pair.is_array() || role_pair.size() != 2) continue;
            Role role{role_pair[0].get<std::string>(), role_pair[1].get<std::string>()};
            if (!taxonomy.valid(role)) {
              result.diagnostics.push_back("backend proposed invalid role " + role.render() +
                                           " for " + file);
              continue;
            }
            role_files[role.render()].push_back({file, 2});
            role_by_render[role.render()] = role;
            if (entry.contains("note") && entry["note"].is_string())
              role_notes[role.render()].push_back(entry["note"].get<std::string>());
            assigned = true;
          }
          if (assigned) still_unassigned.erase(file);
        }
      } catch (const Error& e) {
        result.diagnostics.push_back(std::string("module-assign backend failure: ") + e.what());
      }
    }
  } else if (!ambiguous.empty()) {
    result.diagnostics.push_back("no backend configured; " +
                                 std::to_string(ambiguous.size()) + " ambiguous files unassigned");
  }

  result.unassigned.assign(still_unassigned.begin(), still_unassigned.end());

  // materialize descriptors; split over-large roles by top-level package
  for (auto& [render, assigned_files] : role_files) {
    const Role& role = role_by_render[render];
    std::map<std::string, std::vector<std::pair<std::string, int>>> groups;
    if (assigned_files.size() > kSplitThreshold) {
      for (const auto& fp : assigned_files) {
        std::string head = fp.first.substr(0, fp.first.find('/'));
        groups[render + " @ " + head].push_back(fp);
      }
    } else {
      groups[render] = assigned_files;
    }
    for (auto& [id, group] : groups) {
      ModuleDescriptor m;
      m.id = id;
      m.role = role;
      std::set<std::string> dep_set;
      for (const auto& [file, pass] : group) {
        m.files.push_back(file);
        m.assigned_by[file] = pass;
        for (const auto& imp : code_facts::get_imports(checkout, file))
          dep_set.insert(detail::import_root(imp));
        if (m.funcs.size() < kFuncsPerModule)
          for (const auto& fact : code_facts::extract_facts(checkout, file)) {
            if (m.funcs.size() >= kFuncsPerModule) break;
            m.funcs.push_back(fact);
          }
      }
      std::sort(m.files.begin(), m.files.end());
      auto self = detail::self_packages(files);
      for (const auto& dep : dep_set)
        if (!detail::python_stdlib().count(dep) && !self.count(dep)) m.deps.push_back(dep);
      std::sort(m.deps.begin(), m.deps.end());
      m.label = id + " — " + std::to_string(m.files.size()) + " file(s), e.g. " + m.files.front();
      if (auto it = role_notes.find(render); it != role_notes.end())
        m.feature_notes = util::join(it->second, "; ");
      result.modules.push_back(std::move(m));
    }
  }
  return result;
}

// Projects resolved call relations onto module descriptors: edge (A, B) when
// a caller in A reaches a callee in B, A != B, counting supporting relations.
inline ModuleCallGraph build_module_graph(const std::vector<ModuleDescriptor>& modules,
                                          const std::vector<code_facts::CallRelation>& relations) {
  ModuleCallGraph graph;
  std::map<std::string, std::vector<std::string>> file_modules;
  for (const auto& m : modules) {
    graph.nodes.push_back(m.id);
    for (const auto& f : m.files) file_modules[f].push_back(m.id);
  }
  std::sort(graph.nodes.begin(), graph.nodes.end());

  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& rel : relations) {
    if (!rel.callee_resolved) continue;
    auto cit = file_modules.find(rel.caller.file);
    auto dit = file_modules.find(rel.callee_resolved->file);
    if (cit == file_modules.end() || dit == file_modules.end()) continue;
    for (const auto& caller_mod : cit->second)
      for (const auto& callee_mod : dit->second)
        if (caller_mod != callee_mod) ++counts[{caller_mod, callee_mod}];
  }
  for (const auto& [pair, count] : counts)
    graph.edges.push_back({pair.first, pair.second, count});
  return graph;
}

// Readme-like material feeding the summary call.
inline std::string readme_text(const code_facts::RepoCheckout& checkout) {
  for (const auto& f : code_facts::list_files(checkout)) {
    if (f.find('/') != std::string::npos) continue;
    std::string lower = util::lower(f);
    if (lower.starts_with("readme"))
      return util::truncate(code_facts::read_checkout_file(checkout, f), 4000);
  }
  return "";
}

// One backend call over readme material and module labels. Dependencies are
// computed deterministically from import roots. Backend failure degrades to
// a summary assembled from module labels, flagged as such.
inline RepositorySummary summarize_repository(const code_facts::RepoCheckout& checkout,
                                              const std::vector<ModuleDescriptor>& modules,
                                              llm::LanguageBackend* backend,
                                              llm::TokenLedger* ledger = nullptr,
                                              std::vector<std::string>* diagnostics = nullptr) {
  RepositorySummary summary;

  std::set<std::string> deps;
  auto files = source_files(checkout);
  auto self = detail::self_packages(files);
  for (const auto& f : files)
    for (const auto& imp : code_facts::get_imports(checkout, f)) {
      std::string root = detail::import_root(imp);
      if (!detail::python_stdlib().count(root) && !self.count(root)) deps.insert(root);
    }
  summary.key_dependencies.assign(deps.begin(), deps.end());

  std::vector<std::string> labels;
  for (const auto& m : modules) labels.push_back(m.label);

  auto degrade = [&](const std::string& reason) {
    summary.degraded = true;
    summary.description = checkout.project + ": repository with modules [" +
                          util::join(labels, "; ") + "]";
    summary.application_scenario =
        "inferred from module structure: " + util::join(labels, "; ");
    summary.target_user = "operators of " + checkout.project;
    if (summary.description.empty()) summary.description = checkout.project;
    if (diagnostics) diagnostics->push_back("summary degraded: " + reason);
  };

  if (!backend) {
    degrade("no backend configured");
    return summary;
  }
  json request = {{"project", checkout.project},
                  {"readme", readme_text(checkout)},
                  {"module_labels", labels}};
  try {
    auto reply = llm::chat(*backend, "repo-summary",
                           {prompts::system_message("repo-summary"),
                            llm::make_user(request.dump(2))},
                           nullptr, ledger, "profiling");
    json parsed = json::parse(reply.text, nullptr, false);
    if (!parsed.is_object()) {
      degrade("summary reply was not a JSON object");
      return summary;
    }
    summary.description = parsed.value("description", "");
    summary.application_scenario = parsed.value("application_scenario", "");
    summary.target_user = parsed.value("target_user", "");
    if (summary.description.empty() || summary.application_scenario.empty() ||
        summary.target_user.empty())
      degrade("summary reply missing fields");
  } catch (const Error& e) {
    degrade(e.what());
  }
  return summary;
}

// Full profiling pass over one checkout.
inline RepositorySemantics profile_repository(const code_facts::RepoCheckout& checkout,
                                              const taxonomy::RoleTaxonomy& taxonomy,
                                              llm::LanguageBackend* backend,
                                              llm::TokenLedger* ledger = nullptr) {
  llm::TokenLedger::Use before = ledger ? ledger->stage_total("profiling") : llm::TokenLedger::Use{};

  RepositorySemantics sem;
  sem.project = checkout.project;
  sem.commit = checkout.commit;
  sem.root = checkout.root.generic_string();

  auto assignment = assign_modules(checkout, taxonomy, backend, ledger);
  sem.modules = std::move(assignment.modules);
  sem.unassigned = std::move(assignment.unassigned);
  sem.diagnostics = std::move(assignment.diagnostics);

  auto relations = code_facts::extract_call_relations(checkout, &sem.diagnostics);
  sem.graph = build_module_graph(sem.modules, relations);
  sem.summary = summarize_repository(checkout, sem.modules, backend, ledger, &sem.diagnostics);

  if (ledger) {
    auto after = ledger->stage_total("profiling");
    sem.tokens_in = after.in - before.in;
    sem.tokens_out = after.out - before.out;
  }
  return sem;
}

// ---------------------------------------------------------------------------
// persistence: versioned document per (project, commit)

inline constexpr int kSemanticsSchemaVersion = 1;

namespace detail {

inline const json& require(const json& j, const char* field, const std::string& context) {
  if (!j.contains(field))
    throw Error(Errc::schema, "stored semantics missing field '" + std::string(field) + "' in " +
                                  context);
  return j.at(field);
}

inline json fact_to_json(const code_facts::FunctionFact& f) {
  return {{"file", f.file},
          {"qualified_name", f.qualified_name},
          {"start_line", f.start_line},
          {"end_line", f.end_line},
          {"kind", code_facts::symbol_kind_name(f.kind)}};
}

inline code_facts::FunctionFact fact_from_json(const json& j) {
  code_facts::FunctionFact f;
  f.file = require(j, "file", "function fact").get<std::string>();
  f.qualified_name = require(j, "qualified_name", "function fact").get<std::string>();
  f.start_line = require(j, "start_line", "function fact").get<int>();
  f.end_line = require(j, "end_line", "function fact").get<int>();
  std::string kind = require(j, "kind", "function fact").get<std::string>();
  f.kind = kind == "class"    ? code_facts::SymbolKind::klass
           : kind == "method" ? code_facts::SymbolKind::method
                              : code_facts::SymbolKind::function;
  return f;
}

}  // namespace detail

inline json semantics_to_json(const RepositorySemantics& sem) {
  json modules = json::array();
  for (const auto& m : sem.modules) {
    json funcs = json::array();
    for (const auto& f : m.funcs) funcs.push_back(detail::fact_to_json(f));
    json assigned = json::object();
    for (const auto& [file, pass] : m.assigned_by) assigned[file] = pass;
    modules.push_back({{"id", m.id},
                       {"role", {m.role.coarse, m.role.second}},
                       {"label", m.label},
                       {"files", m.files},
                       {"funcs", funcs},
                       {"deps", m.deps},
                       {"feature_notes", m.feature_notes},
                       {"assigned_by", assigned}});
  }
  json edges = json::array();
  for (const auto& e : sem.graph.edges)
    edges.push_back({{"caller", e.caller}, {"callee", e.callee}, {"count", e.count}});
  return {{"schema_version", kSemanticsSchemaVersion},
          {"project", sem.project},
          {"commit", sem.commit},
          {"root", sem.root},
          {"summary",
           {{"description", sem.summary.description},
            {"application_scenario", sem.summary.application_scenario},
            {"target_user", sem.summary.target_user},
            {"key_dependencies", sem.summary.key_dependencies},
            {"degraded", sem.summary.degraded}}},
          {"modules", modules},
          {"unassigned", sem.unassigned},
          {"graph", {{"nodes", sem.graph.nodes}, {"edges", edges}}},
          {"token_usage", {{"in", sem.tokens_in}, {"out", sem.tokens_out}}},
          {"diagnostics", sem.diagnostics}};
}

inline RepositorySemantics semantics_from_json(const json& doc) {
  using detail::require;
  int version = require(doc, "schema_version", "semantics document").get<int>();
  if (version != kSemanticsSchemaVersion)
    throw Error(Errc::state, "semantics schema version " + std::to_string(version) +
                                 " requires migration to " +
                                 std::to_string(kSemanticsSchemaVersion));
  RepositorySemantics sem;
  sem.project = require(doc, "project", "semantics document").get<std::string>();
  sem.commit = require(doc, "commit", "semantics document").get<std::string>();
  sem.root = doc.value("root", "");
  const json& s = require(doc, "summary", "semantics document");
  sem.summary.description = require(s, "description", "summary").get<std::string>();
  sem.summary.application_scenario =
      require(s, "application_scenario", "summary").get<std::string>();
  sem.summary.target_user = require(s, "target_user", "summary").get<std::string>();
  sem.summary.key_dependencies =
      require(s, "key_dependencies", "summary").get<std::vector<std::string>>();
  sem.summary.degraded = s.value("degraded", false);
  for (const auto& mj : require(doc, "modules", "semantics document")) {
    ModuleDescriptor m;
    m.id = require(mj, "id", "module").get<std::string>();
    const json& role = require(mj, "role", "module");
    if (!role.is_array() || role.size() != 2)
      throw Error(Errc::schema, "stored semantics field 'role' must be a [coarse, second] pair");
    m.role = Role{role[0].get<std::string>(), role[1].get<std::string>()};
    m.label = require(mj, "label", "module").get<std::string>();
    m.files = require(mj, "files", "module").get<std::vector<std::string>>();
    for (const auto& fj : require(mj, "funcs", "module"))
      m.funcs.push_back(detail::fact_from_json(fj));
    m.deps = require(mj, "deps", "module").get<std::vector<std::string>>();
    m.feature_notes = mj.value("feature_notes", "");
    for (const auto& [file, pass] : require(mj, "assigned_by", "module").items())
      m.assigned_by[file] = pass.get<int>();
    sem.modules.push_back(std::move(m));
  }
  sem.unassigned = require(doc, "unassigned", "semantics document").get<std::vector<std::string>>();
  const json& g = require(doc, "graph", "semantics document");
  sem.graph.nodes = require(g, "nodes", "graph").get<std::vector<std::string>>();
  for (const auto& ej : require(g, "edges", "graph"))
    sem.graph.edges.push_back({require(ej, "caller", "edge").get<std::string>(),
                               require(ej, "callee", "edge").get<std::string>(),
                               require(ej, "count", "edge").get<int>()});
  const json& usage = require(doc, "token_usage", "semantics document");
  sem.tokens_in = usage.value("in", 0L);
  sem.tokens_out = usage.value("out", 0L);
  sem.diagnostics = doc.value("diagnostics", std::vector<std::string>{});
  return sem;
}

inline std::filesystem::path semantics_path(const std::filesystem::path& store_dir,
                                            const std::string& project,
                                            const std::string& commit) {
  return store_dir / (util::sanitize_key(project) + "@" + util::sanitize_key(commit) + ".json");
}

inline std::filesystem::path persist_semantics(const RepositorySemantics& sem,
                                               const std::filesystem::path& store_dir) {
  auto path = semantics_path(store_dir, sem.project, sem.commit);
  util::write_text_file(path, semantics_to_json(sem).dump(2));
  return path;
}

inline RepositorySemantics load_semantics(const std::filesystem::path& store_dir,
                                          const std::string& project, const std::string& commit) {
  auto path = semantics_path(store_dir, project, commit);
  if (!std::filesystem::exists(path))
    throw Error(Errc::not_found,
                "no stored semantics for " + project + "@" + commit + " under " +
                    store_dir.string());
  json doc;
  try {
    doc = json::parse(util::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::schema, std::string("corrupt semantics document: ") + e.what());
  }
  return semantics_from_json(doc);
}

}  // namespace refaudit::repo_semantics
