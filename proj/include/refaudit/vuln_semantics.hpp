#pragma once

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
#include "refaudit/taxonomy.hpp"

// Vulnerability semantics: the witness chain parsed from a reference
// disclosure document, the six-field feature set distilled from it, and the
// affected module roles recovered against the reference repository.
namespace refaudit::vuln_semantics {

using nlohmann::json;
using taxonomy::Role;

enum class ChainRole { source, propagation, sink };

inline const char* chain_role_name(ChainRole r) {
  switch (r) {
    case ChainRole::source: return "source";
    case ChainRole::propagation: return "propagation";
    case ChainRole::sink: return "sink";
  }
  return "propagation";
}

inline ChainRole chain_role_from(const std::string& s) {
  if (s == "source") return ChainRole::source;
  if (s == "propagation") return ChainRole::propagation;
  if (s == "sink") return ChainRole::sink;
  throw Error(Errc::format, "unknown chain role: " + s);
}

struct ChainEntry {
  std::string file;
  std::string function;
  ChainRole role = ChainRole::propagation;
  std::string note;

  bool operator==(const ChainEntry&) const = default;
};

struct WitnessChain {
  std::string advisory_id;
  std::vector<ChainEntry> entries;  // source first, sink last, length >= 2
  std::string payload_note;
  std::vector<std::string> diagnostics;  // e.g. chain files missing in the checkout

  bool operator==(const WitnessChain&) const = default;
};

struct VulnFeatureSet {
  std::string vuln_family;
  std::string trigger_condition;
  std::string propagation_constraints;
  std::string exploitable_scenario;
  std::string missing_guard;
  std::string trust_boundary;

  bool operator==(const VulnFeatureSet&) const = default;

  bool complete() const {
    return !vuln_family.empty() && !trigger_condition.empty() &&
           !propagation_constraints.empty() && !exploitable_scenario.empty() &&
           !missing_guard.empty() && !trust_boundary.empty();
  }
};

struct VulnerabilitySemantics {
  std::string advisory_id;
  VulnFeatureSet features;
  std::vector<Role> affected_modules;  // sorted, non-empty, taxonomy-valid
  std::string reference_project;
  std::string reference_commit;
  WitnessChain chain;
  std::vector<std::string> diagnostics;

  bool operator==(const VulnerabilitySemantics&) const = default;
};

// ---------------------------------------------------------------------------
// reference document parsing

inline constexpr int kReferenceSchemaVersion = 1;

// Operator-authored reference document:
// {"schema_version":1, "advisory_id":..., "project":..., "commit":...,
//  "payload":..., "chain":[{"file":..,"function":..,"role":..,"note":..}]}
// Chain entries are resolved against the reference checkout when one is
// given; a missing file is flagged, not fatal.
inline WitnessChain parse_reference(const json& doc,
                                    const code_facts::RepoCheckout* reference = nullptr) {
  if (!doc.is_object()) throw Error(Errc::format, "reference document must be a JSON object");
  int version = doc.value("schema_version", 0);
  if (version != kReferenceSchemaVersion)
    throw Error(Errc::state, "reference document schema version " + std::to_string(version) +
                                 " requires migration to " +
                                 std::to_string(kReferenceSchemaVersion));
  WitnessChain chain;
  if (!doc.contains("advisory_id") || !doc["advisory_id"].is_string() ||
      doc["advisory_id"].get<std::string>().empty())
    throw Error(Errc::format, "reference document missing 'advisory_id'");
  chain.advisory_id = doc["advisory_id"].get<std::string>();
  chain.payload_note = doc.value("payload", "");

  if (!doc.contains("chain") || !doc["chain"].is_array())
    throw Error(Errc::format, "reference document missing 'chain' array");
  for (const auto& ej : doc["chain"]) {
    ChainEntry e;
    e.file = ej.value("file", "");
    e.function = ej.value("function", "");
    e.role = chain_role_from(ej.value("role", ""));
    e.note = ej.value("note", "");
    if (e.file.empty())
      throw Error(Errc::format, "chain entry missing 'file'");
    chain.entries.push_back(std::move(e));
  }

  if (chain.entries.size() < 2)
    throw Error(Errc::format, "witness chain must have at least 2 entries (source to sink)");
  if (chain.entries.front().role != ChainRole::source)
    throw Error(Errc::format, "witness chain must start with a source entry");
  if (chain.entries.back().role != ChainRole::sink)
    throw Error(Errc::format, "witness chain must end with a sink entry");
  for (std::size_t i = 1; i + 1 < chain.entries.size(); ++i)
    if (chain.entries[i].role != ChainRole::propagation)
      throw Error(Errc::format, "interior chain entries must have role 'propagation'");

  if (reference) {
    for (const auto& e : chain.entries)
      if (!code_facts::file_exists(*reference, e.file))
        chain.diagnostics.push_back("chain file not found in reference checkout: " + e.file);
  }
  return chain;
}

// ---------------------------------------------------------------------------
// feature extraction

// One backend call carrying the ordered chain, payload note, and code
// snippets read from the reference checkout. The reply must satisfy the
// six-field schema; one retry is allowed, then the raw output is surfaced
// for operator review.
inline VulnFeatureSet extract_features(const WitnessChain& chain,
                                       const repo_semantics::RepositorySemantics& ref_sem,
                                       const code_facts::RepoCheckout& reference,
                                       llm::LanguageBackend& backend,
                                       llm::TokenLedger* ledger = nullptr) {
  json chain_doc = json::array();
  for (const auto& e : chain.entries) {
    json entry = {{"file", e.file},
                  {"function", e.function},
                  {"role", chain_role_name(e.role)},
                  {"note", e.note}};
    if (code_facts::file_exists(reference, e.file)) {
      try {
        entry["snippet"] = code_facts::get_function_code(reference, e.file, e.function).source;
      } catch (const Error&) {
        auto lines = util::split_lines(code_facts::read_checkout_file(reference, e.file));
        lines.resize(std::min<std::size_t>(lines.size(), 40));
        entry["snippet"] = util::join(lines, "\n");
      }
    }
    chain_doc.push_back(std::move(entry));
  }
  json request = {{"advisory_id", chain.advisory_id},
                  {"payload", chain.payload_note},
                  {"reference_project", ref_sem.project},
                  {"chain", chain_doc}};

  auto parse_reply = [](const std::string& text) -> std::optional<VulnFeatureSet> {
    json parsed = json::parse(text, nullptr, false);
    if (!parsed.is_object()) return std::nullopt;
    VulnFeatureSet f;
    f.vuln_family = parsed.value("vuln_family", "");
    f.trigger_condition = parsed.value("trigger_condition", "");
    f.propagation_constraints = parsed.value("propagation_constraints", "");
    f.exploitable_scenario = parsed.value("exploitable_scenario", "");
    f.missing_guard = parsed.value("missing_guard", "");
    f.trust_boundary = parsed.value("trust_boundary", "");
    if (!f.complete()) return std::nullopt;
    return f;
  };

  std::vector<llm::Message> messages = {prompts::system_message("vuln-features"),
                                        llm::make_user(request.dump(2))};
  auto reply = llm::chat(backend, "vuln-features", messages, nullptr, ledger, "vuln-extraction");
  if (auto features = parse_reply(reply.text)) return *features;

  messages.push_back({"assistant", reply.text});
  messages.push_back(llm::make_user(
      "The reply violated the schema. Respond again with a JSON object containing exactly the "
      "six non-empty fields: vuln_family, trigger_condition, propagation_constraints, "
      "exploitable_scenario, missing_guard, trust_boundary."));
  auto retry = llm::chat(backend, "vuln-features", messages, nullptr, ledger, "vuln-extraction");
  if (auto features = parse_reply(retry.text)) return *features;

  throw Error(Errc::schema,
              "feature extraction failed schema validation twice; raw output: " +
                  util::truncate(retry.text, 2000));
}

// Affected modules = roles of reference modules containing any chain file.
// Unassigned chain files contribute a diagnostic, not a role.
inline std::vector<Role> recover_affected_modules(
    const WitnessChain& chain, const repo_semantics::RepositorySemantics& ref_sem,
    std::vector<std::string>* diagnostics = nullptr) {
  std::set<Role> roles;
  for (const auto& e : chain.entries) {
    auto modules = ref_sem.modules_of_file(e.file);
    if (modules.empty()) {
      if (diagnostics)
        diagnostics->push_back("chain file has no module in the reference map: " + e.file);
      continue;
    }
    for (const auto& id : modules)
      if (const auto* m = ref_sem.find_module(id)) roles.insert(m->role);
  }
  if (roles.empty())
    throw Error(Errc::state,
                "no affected modules recovered; every chain file is unassigned in the reference");
  return {roles.begin(), roles.end()};
}

inline VulnerabilitySemantics build_vulnerability_semantics(
    const WitnessChain& chain, const repo_semantics::RepositorySemantics& ref_sem,
    const code_facts::RepoCheckout& reference, llm::LanguageBackend& backend,
    llm::TokenLedger* ledger = nullptr) {
  VulnerabilitySemantics sem;
  sem.advisory_id = chain.advisory_id;
  sem.chain = chain;
  sem.reference_project = ref_sem.project;
  sem.reference_commit = ref_sem.commit;
  sem.features = extract_features(chain, ref_sem, reference, backend, ledger);
  sem.affected_modules = recover_affected_modules(chain, ref_sem, &sem.diagnostics);
  return sem;
}

// ---------------------------------------------------------------------------
// persistence, keyed by advisory id

inline constexpr int kVulnSchemaVersion = 1;

inline json vuln_to_json(const VulnerabilitySemantics& sem) {
  json chain = json::array();
  for (const auto& e : sem.chain.entries)
    chain.push_back({{"file", e.file},
                     {"function", e.function},
                     {"role", chain_role_name(e.role)},
                     {"note", e.note}});
  json affected = json::array();
  for (const auto& r : sem.affected_modules) affected.push_back({r.coarse, r.second});
  return {{"schema_version", kVulnSchemaVersion},
          {"advisory_id", sem.advisory_id},
          {"features",
           {{"vuln_family", sem.features.vuln_family},
            {"trigger_condition", sem.features.trigger_condition},
            {"propagation_constraints", sem.features.propagation_constraints},
            {"exploitable_scenario", sem.features.exploitable_scenario},
            {"missing_guard", sem.features.missing_guard},
            {"trust_boundary", sem.features.trust_boundary}}},
          {"affected_modules", affected},
          {"reference_project", sem.reference_project},
          {"reference_commit", sem.reference_commit},
          {"chain",
           {{"advisory_id", sem.chain.advisory_id},
            {"entries", chain},
            {"payload_note", sem.chain.payload_note},
            {"diagnostics", sem.chain.diagnostics}}},
          {"diagnostics", sem.diagnostics}};
}

inline VulnerabilitySemantics vuln_from_json(const json& doc) {
  int version = doc.value("schema_version", 0);
  if (version != kVulnSchemaVersion)
    throw Error(Errc::state, "vulnerability document schema version " + std::to_string(version) +
                                 " requires migration to " + std::to_string(kVulnSchemaVersion));
  VulnerabilitySemantics sem;
  auto req = [&](const json& j, const char* field) -> const json& {
    if (!j.contains(field))
      throw Error(Errc::schema,
                  "stored vulnerability document missing field '" + std::string(field) + "'");
    return j.at(field);
  };
  sem.advisory_id = req(doc, "advisory_id").get<std::string>();
  const json& f = req(doc, "features");
  sem.features.vuln_family = req(f, "vuln_family").get<std::string>();
  sem.features.trigger_condition = req(f, "trigger_condition").get<std::string>();
  sem.features.propagation_constraints = req(f, "propagation_constraints").get<std::string>();
  sem.features.exploitable_scenario = req(f, "exploitable_scenario").get<std::string>();
  sem.features.missing_guard = req(f, "missing_guard").get<std::string>();
  sem.features.trust_boundary = req(f, "trust_boundary").get<std::string>();
  for (const auto& rj : req(doc, "affected_modules")) {
    if (!rj.is_array() || rj.size() != 2)
      throw Error(Errc::schema, "stored vulnerability field 'affected_modules' is malformed");
    sem.affected_modules.push_back(Role{rj[0].get<std::string>(), rj[1].get<std::string>()});
  }
  sem.reference_project = req(doc, "reference_project").get<std::string>();
  sem.reference_commit = req(doc, "reference_commit").get<std::string>();
  const json& c = req(doc, "chain");
  sem.chain.advisory_id = c.value("advisory_id", sem.advisory_id);
  sem.chain.payload_note = c.value("payload_note", "");
  sem.chain.diagnostics = c.value("diagnostics", std::vector<std::string>{});
  for (const auto& ej : req(c, "entries")) {
    ChainEntry e;
    e.file = req(ej, "file").get<std::string>();
    e.function = ej.value("function", "");
    e.role = chain_role_from(req(ej, "role").get<std::string>());
    e.note = ej.value("note", "");
    sem.chain.entries.push_back(std::move(e));
  }
  sem.diagnostics = doc.value("diagnostics", std::vector<std::string>{});
  return sem;
}

inline std::filesystem::path vuln_path(const std::filesystem::path& store_dir,
                                       const std::string& advisory_id) {
  return store_dir / (util::sanitize_key(advisory_id) + ".json");
}

inline std::filesystem::path persist_vuln(const VulnerabilitySemantics& sem,
                                          const std::filesystem::path& store_dir) {
  auto path = vuln_path(store_dir, sem.advisory_id);
  util::write_text_file(path, vuln_to_json(sem).dump(2));
  return path;
}

inline VulnerabilitySemantics load_vuln(const std::filesystem::path& store_dir,
                                        const std::string& advisory_id) {
  auto path = vuln_path(store_dir, advisory_id);
  if (!std::filesystem::exists(path))
    throw Error(Errc::not_found, "no stored vulnerability semantics for advisory " + advisory_id);
  json doc;
  try {
    doc = json::parse(util::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::schema, std::string("corrupt vulnerability document: ") + e.what());
  }
  return vuln_from_json(doc);
}

}  // namespace refaudit::vuln_semantics
