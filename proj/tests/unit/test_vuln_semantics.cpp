#include <set>

#include "catch2/catch_amalgamated.hpp"
#include "refaudit/vuln_semantics.hpp"
#include "support.hpp"

using namespace refaudit;
using nlohmann::json;
using testsupport::TempDir;
using testsupport::write_repo;

namespace {

json chain_entry(const std::string& file, const std::string& function, const std::string& role,
                 const std::string& note = "") {
  return {{"file", file}, {"function", function}, {"role", role}, {"note", note}};
}

json reference_doc(const json& chain, const std::string& advisory = "ADV-1") {
  return {{"schema_version", 1},
          {"advisory_id", advisory},
          {"project", "refproj"},
          {"commit", "c1"},
          {"payload", "crafted serialized state"},
          {"chain", chain}};
}

}  // namespace

TEST_CASE("parse_reference accepts chains from two to seven entries", "[vuln-semantics]") {
  // seven-entry chain, the longest shape a deserialization advisory uses
  json seven = json::array({chain_entry("a.py", "entry", "source"),
                            chain_entry("b.py", "route", "propagation"),
                            chain_entry("c.py", "parse", "propagation"),
                            chain_entry("d.py", "resolve", "propagation"),
                            chain_entry("e.py", "fetch", "propagation"),
                            chain_entry("f.py", "prepare", "propagation"),
                            chain_entry("g.py", "load", "sink")});
  auto chain7 = vuln_semantics::parse_reference(reference_doc(seven));
  CHECK(chain7.entries.size() == 7);
  CHECK(chain7.advisory_id == "ADV-1");
  CHECK(chain7.payload_note == "crafted serialized state");

  // minimal source->sink pair, as in a SQL injection advisory
  json two = json::array({chain_entry("q.py", "build_query", "source"),
                          chain_entry("q.py", "execute", "sink")});
  CHECK(vuln_semantics::parse_reference(reference_doc(two)).entries.size() == 2);
}

TEST_CASE("parse_reference rejects malformed chains", "[vuln-semantics]") {
  json sink_first = json::array({chain_entry("a.py", "f", "sink"),
                                 chain_entry("b.py", "g", "source")});
  CHECK_THROWS_MATCHES(vuln_semantics::parse_reference(reference_doc(sink_first)), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("start with a source")));

  json single = json::array({chain_entry("a.py", "f", "source")});
  CHECK_THROWS_MATCHES(vuln_semantics::parse_reference(reference_doc(single)), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("at least 2")));

  json no_sink = json::array({chain_entry("a.py", "f", "source"),
                              chain_entry("b.py", "g", "propagation")});
  CHECK_THROWS_AS(vuln_semantics::parse_reference(reference_doc(no_sink)), Error);

  json bad_role = json::array({chain_entry("a.py", "f", "source"),
                               chain_entry("b.py", "g", "weird"),
                               chain_entry("c.py", "h", "sink")});
  CHECK_THROWS_AS(vuln_semantics::parse_reference(reference_doc(bad_role)), Error);

  json wrong_version = reference_doc(json::array({chain_entry("a.py", "f", "source"),
                                                  chain_entry("b.py", "g", "sink")}));
  wrong_version["schema_version"] = 3;
  CHECK_THROWS_AS(vuln_semantics::parse_reference(wrong_version), Error);
}

TEST_CASE("chain entries resolve against the reference checkout", "[vuln-semantics]") {
  TempDir dir("refrepo");
  write_repo(dir.path(), {{"webui/page.py", "def on_submit(p):\n    return p\n"}});
  code_facts::RepoCheckout checkout(dir.path(), "refproj", "c1");

  json chain = json::array({chain_entry("webui/page.py", "on_submit", "source"),
                            chain_entry("loader/gone.py", "load", "sink")});
  auto parsed = vuln_semantics::parse_reference(reference_doc(chain), &checkout);
  REQUIRE(parsed.diagnostics.size() == 1);
  CHECK(parsed.diagnostics[0].find("loader/gone.py") != std::string::npos);
}

TEST_CASE("extract_features returns the six-field schema", "[vuln-semantics]") {
  TempDir dir("features");
  write_repo(dir.path(), {{"webui/page.py", "def on_submit(p):\n    return load(p)\n"},
                          {"loader/adapter.py",
                           "import torch\n\ndef load(p):\n    return torch.load(p)\n"}});
  code_facts::RepoCheckout checkout(dir.path(), "refproj", "c1");
  auto ref_sem =
      repo_semantics::profile_repository(checkout, taxonomy::RoleTaxonomy::builtin(), nullptr);

  json chain = json::array({chain_entry("webui/page.py", "on_submit", "source"),
                            chain_entry("loader/adapter.py", "load", "sink")});
  auto parsed = vuln_semantics::parse_reference(reference_doc(chain), &checkout);

  llm::ScriptedBackend backend;
  backend.add_sequence(
      "vuln-features",
      json{{"text", json{{"vuln_family", "deserialization"},
                         {"trigger_condition", "attacker-controlled adapter path"},
                         {"propagation_constraints", "path flows from the form to the loader"},
                         {"exploitable_scenario", "upload of a crafted serialized adapter"},
                         {"missing_guard", "no safe-load check before torch.load"},
                         {"trust_boundary", "web ui form input"}}
                        .dump()}});
  llm::TokenLedger ledger;
  auto features =
      vuln_semantics::extract_features(parsed, ref_sem, checkout, backend, &ledger);
  CHECK(features.complete());
  CHECK(features.vuln_family == "deserialization");
  CHECK(features.missing_guard.find("safe-load") != std::string::npos);
  CHECK(ledger.stage_total("vuln-extraction").in > 0);
}

TEST_CASE("five-field replies trigger one retry then an error", "[vuln-semantics]") {
  TempDir dir("retry");
  write_repo(dir.path(), {{"a.py", "def f():\n    return 1\n"}});
  code_facts::RepoCheckout checkout(dir.path(), "refproj", "c1");
  auto ref_sem =
      repo_semantics::profile_repository(checkout, taxonomy::RoleTaxonomy::builtin(), nullptr);
  json chain = json::array({chain_entry("a.py", "f", "source"),
                            chain_entry("a.py", "f", "sink")});
  auto parsed = vuln_semantics::parse_reference(reference_doc(chain));

  json five_fields = {{"vuln_family", "deserialization"},
                      {"trigger_condition", "t"},
                      {"propagation_constraints", "p"},
                      {"exploitable_scenario", "e"},
                      {"missing_guard", "m"}};  // trust_boundary missing

  SECTION("retry succeeds") {
    llm::ScriptedBackend backend;
    backend.add_sequence("vuln-features", json{{"text", five_fields.dump()}});
    json six = five_fields;
    six["trust_boundary"] = "ui";
    backend.add_sequence("vuln-features", json{{"text", six.dump()}});
    auto features = vuln_semantics::extract_features(parsed, ref_sem, checkout, backend);
    CHECK(features.trust_boundary == "ui");
  }

  SECTION("two schema failures carry the raw output") {
    llm::ScriptedBackend backend;
    backend.add_sequence("vuln-features", json{{"text", five_fields.dump()}});
    backend.add_sequence("vuln-features", json{{"text", "still not valid"}});
    try {
      vuln_semantics::extract_features(parsed, ref_sem, checkout, backend);
      FAIL("expected schema error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::schema);
      CHECK(std::string(e.what()).find("still not valid") != std::string::npos);
    }
  }
}

TEST_CASE("recover_affected_modules matches the brute-force role union", "[vuln-semantics]") {
  TempDir dir("affected");
  write_repo(dir.path(), {{"webui/page.py", "import gradio\n"},
                          {"loader/adapter.py", "import torch\n"},
                          {"misc/extra.py", "pass\n"}});
  code_facts::RepoCheckout checkout(dir.path(), "refproj", "c1");
  auto ref_sem =
      repo_semantics::profile_repository(checkout, taxonomy::RoleTaxonomy::builtin(), nullptr);

  vuln_semantics::WitnessChain chain;
  chain.advisory_id = "ADV-1";
  chain.entries = {{"webui/page.py", "on_submit", vuln_semantics::ChainRole::source, ""},
                   {"loader/adapter.py", "load", vuln_semantics::ChainRole::sink, ""}};

  auto roles = vuln_semantics::recover_affected_modules(chain, ref_sem);

  // brute force: union of roles of modules whose files intersect the chain
  std::set<taxonomy::Role> expected;
  for (const auto& m : ref_sem.modules)
    for (const auto& e : chain.entries)
      if (std::find(m.files.begin(), m.files.end(), e.file) != m.files.end())
        expected.insert(m.role);
  CHECK(std::set<taxonomy::Role>(roles.begin(), roles.end()) == expected);
  CHECK(expected.count({"UI and Workflows", "Web UI"}) == 1);
  CHECK(expected.count({"Model Assets and Loading", "Loading Configuration"}) == 1);

  SECTION("single-module chains produce a singleton") {
    vuln_semantics::WitnessChain narrow;
    narrow.advisory_id = "ADV-1";
    narrow.entries = {{"webui/page.py", "a", vuln_semantics::ChainRole::source, ""},
                      {"webui/page.py", "b", vuln_semantics::ChainRole::sink, ""}};
    auto single = vuln_semantics::recover_affected_modules(narrow, ref_sem);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == taxonomy::Role{"UI and Workflows", "Web UI"});
  }

  SECTION("unassigned chain files yield diagnostics, not roles") {
    vuln_semantics::WitnessChain mixed;
    mixed.advisory_id = "ADV-1";
    mixed.entries = {{"webui/page.py", "a", vuln_semantics::ChainRole::source, ""},
                     {"misc/extra.py", "b", vuln_semantics::ChainRole::sink, ""}};
    std::vector<std::string> diagnostics;
    auto roles2 = vuln_semantics::recover_affected_modules(mixed, ref_sem, &diagnostics);
    CHECK(roles2.size() == 1);
    REQUIRE(diagnostics.size() == 1);
    CHECK(diagnostics[0].find("misc/extra.py") != std::string::npos);
  }

  SECTION("fully unassigned chains are an error") {
    vuln_semantics::WitnessChain lost;
    lost.advisory_id = "ADV-1";
    lost.entries = {{"misc/extra.py", "a", vuln_semantics::ChainRole::source, ""},
                    {"misc/extra.py", "b", vuln_semantics::ChainRole::sink, ""}};
    CHECK_THROWS_AS(vuln_semantics::recover_affected_modules(lost, ref_sem), Error);
  }
}

TEST_CASE("vulnerability semantics persist and load round-trip", "[vuln-semantics]") {
  TempDir store("vulnstore");
  vuln_semantics::VulnerabilitySemantics sem;
  sem.advisory_id = "ADV-9";
  sem.features = {"deserialization", "t", "p", "e", "m", "b"};
  sem.affected_modules = {{"UI and Workflows", "Web UI"}};
  sem.reference_project = "refproj";
  sem.reference_commit = "c1";
  sem.chain.advisory_id = "ADV-9";
  sem.chain.entries = {{"a.py", "f", vuln_semantics::ChainRole::source, "entry"},
                       {"b.py", "g", vuln_semantics::ChainRole::sink, "load"}};
  sem.chain.payload_note = "payload";

  vuln_semantics::persist_vuln(sem, store.path());
  auto loaded = vuln_semantics::load_vuln(store.path(), "ADV-9");
  CHECK(loaded == sem);

  CHECK_THROWS_AS(vuln_semantics::load_vuln(store.path(), "ADV-MISSING"), Error);
}
