#include <algorithm>
#include <random>
#include <set>

#include "catch2/catch_amalgamated.hpp"
#include "refaudit/code_facts.hpp"
#include "support.hpp"

using namespace refaudit;
using testsupport::TempDir;
using testsupport::write_repo;

namespace {

code_facts::RepoCheckout make_checkout(const TempDir& dir, const std::string& project = "demo") {
  return code_facts::RepoCheckout(dir.path(), project, "c1");
}

}  // namespace

TEST_CASE("list_files enumerates lexicographically and honors subdir", "[code-facts]") {
  TempDir dir("list");
  write_repo(dir.path(), {{"a.py", "x = 1\n"}, {"src/b.py", "y = 2\n"}});
  auto checkout = make_checkout(dir);

  CHECK(code_facts::list_files(checkout) == std::vector<std::string>{"a.py", "src/b.py"});
  CHECK(code_facts::list_files(checkout, "src") == std::vector<std::string>{"src/b.py"});

  CHECK_THROWS_MATCHES(code_facts::list_files(checkout, "../etc"), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("outside checkout")));
  CHECK_THROWS_MATCHES(code_facts::list_files(checkout, "missing"), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("empty scope")));
}

TEST_CASE("list_files skips version-control metadata", "[code-facts]") {
  TempDir dir("vcs");
  write_repo(dir.path(), {{"a.py", "pass\n"}, {".git/HEAD", "ref: x\n"}, {".hg/store", "h\n"}});
  auto checkout = make_checkout(dir);
  CHECK(code_facts::list_files(checkout) == std::vector<std::string>{"a.py"});
}

TEST_CASE("checkout construction validates inputs", "[code-facts]") {
  TempDir dir("checkout");
  CHECK_THROWS_AS(code_facts::RepoCheckout(dir.path() / "nope", "p", "c"), Error);
  CHECK_THROWS_AS(code_facts::RepoCheckout(dir.path(), "p", ""), Error);
}

TEST_CASE("search finds literal patterns with line numbers", "[code-facts]") {
  TempDir dir("search");
  write_repo(dir.path(), {{"m.py",
                           "import torch\n"
                           "\n"
                           "\n"
                           "def load(p):\n"
                           "    # comment line\n"
                           "    x = 1\n"
                           "    torch.load(path)\n"}});
  auto checkout = make_checkout(dir);

  auto hits = code_facts::search(checkout, R"(torch\.load)");
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].file == "m.py");
  CHECK(hits[0].line == 7);
  CHECK(hits[0].text == "    torch.load(path)");

  CHECK(code_facts::search(checkout, "nothing_matches_this").empty());
}

TEST_CASE("search rejects bad patterns with a position", "[code-facts]") {
  TempDir dir("badpat");
  write_repo(dir.path(), {{"a.py", "pass\n"}});
  auto checkout = make_checkout(dir);
  try {
    code_facts::search(checkout, "(");
    FAIL("expected pattern error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::pattern);
    CHECK(std::string(e.what()).find("position 0") != std::string::npos);
  }
}

TEST_CASE("search truncates long lines to the width cap", "[code-facts]") {
  TempDir dir("width");
  std::string long_line = "needle " + std::string(600, 'x');
  write_repo(dir.path(), {{"a.py", long_line + "\n"}});
  auto checkout = make_checkout(dir);
  auto hits = code_facts::search(checkout, "needle", "", SIZE_MAX, 400);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].text.size() <= 403);  // cap plus ellipsis
}

TEST_CASE("get_function_code extracts spans by name and kind", "[code-facts]") {
  TempDir dir("func");
  write_repo(dir.path(), {{"m.py",
                           "def f():\n"
                           "    return 1\n"
                           "\n"
                           "class Widget:\n"
                           "    def render(self):\n"
                           "        return 2\n"}});
  auto checkout = make_checkout(dir);

  auto f = code_facts::get_function_code(checkout, "m.py", "f");
  CHECK(f.fact.start_line == 1);
  CHECK(f.fact.end_line == 2);
  CHECK(f.fact.kind == code_facts::SymbolKind::function);
  CHECK(f.source.find("1\tdef f():") != std::string::npos);

  auto cls = code_facts::get_function_code(checkout, "m.py", "Widget");
  CHECK(cls.fact.kind == code_facts::SymbolKind::klass);
  CHECK(cls.fact.start_line == 4);
  CHECK(cls.fact.end_line == 6);

  auto method = code_facts::get_function_code(checkout, "m.py", "Widget.render");
  CHECK(method.fact.kind == code_facts::SymbolKind::method);
  CHECK(method.fact.start_line == 5);

  CHECK_THROWS_AS(code_facts::get_function_code(checkout, "m.py", "missing"), Error);
}

TEST_CASE("get_function_code resolves by containing line", "[code-facts]") {
  TempDir dir("line");
  write_repo(dir.path(), {{"m.py",
                           "def outer():\n"
                           "    def inner():\n"
                           "        return 3\n"
                           "    return inner\n"}});
  auto checkout = make_checkout(dir);
  auto inner = code_facts::get_function_code(checkout, "m.py", "3");
  CHECK(inner.fact.qualified_name == "outer.inner");
}

TEST_CASE("docstrings and strings do not confuse the scanner", "[code-facts]") {
  TempDir dir("docstr");
  write_repo(dir.path(), {{"m.py",
                           "def f():\n"
                           "    \"\"\"docstring with def fake(): inside\n"
                           "and a second line\n"
                           "    \"\"\"\n"
                           "    s = 'def another(x):'\n"
                           "    return s\n"}});
  auto checkout = make_checkout(dir);
  auto facts = code_facts::extract_facts(checkout, "m.py");
  REQUIRE(facts.size() == 1);
  CHECK(facts[0].qualified_name == "f");
  CHECK(facts[0].end_line == 6);
}

TEST_CASE("unparseable binary file degrades to whole-file return", "[code-facts]") {
  TempDir dir("binary");
  std::string blob = "def f():\n";
  blob.push_back('\0');
  blob += "junk\n";
  write_repo(dir.path(), {{"blob.py", blob}});
  auto checkout = make_checkout(dir);
  auto fc = code_facts::get_function_code(checkout, "blob.py", "f");
  CHECK(fc.unparsed);
}

TEST_CASE("get_imports normalizes and deduplicates", "[code-facts]") {
  TempDir dir("imports");
  write_repo(dir.path(), {{"pkg/mod.py",
                           "import os\n"
                           "from x.y import z\n"
                           "import os\n"
                           "import numpy as np, json\n"
                           "from .util import helper\n"
                           "from . import sibling\n"},
                          {"empty.py", ""}});
  auto checkout = make_checkout(dir);

  auto imports = code_facts::get_imports(checkout, "pkg/mod.py");
  CHECK(imports == std::vector<std::string>{"os", "x.y", "numpy", "json", "pkg.util",
                                             "pkg.sibling"});
  CHECK(code_facts::get_imports(checkout, "empty.py").empty());
}

// Hand-built two-file fixture; expected relations enumerated manually.
TEST_CASE("call relations match the hand-enumerated oracle", "[code-facts]") {
  TempDir dir("calls");
  write_repo(dir.path(), {{"a.py",
                           "import requests\n"
                           "from b import g\n"
                           "\n"
                           "def f():\n"
                           "    g()\n"
                           "    requests.get('http://example')\n"},
                          {"b.py",
                           "def g():\n"
                           "    return 1\n"},
                          {"quiet.py", "x = 1\n"}});
  auto checkout = make_checkout(dir);

  auto relations = code_facts::extract_call_relations(checkout);
  // oracle: exactly two call sites, both inside f
  REQUIRE(relations.size() == 2);
  std::set<std::string> callees;
  for (const auto& rel : relations) {
    CHECK(rel.caller.qualified_name == "f");
    callees.insert(rel.callee_name);
  }
  CHECK(callees == std::set<std::string>{"g", "requests.get"});

  for (const auto& rel : relations) {
    if (rel.callee_name == "g") {
      REQUIRE(rel.callee_resolved.has_value());
      CHECK(rel.callee_resolved->file == "b.py");
      CHECK(rel.call_site_line == 5);
    } else {
      CHECK_FALSE(rel.callee_resolved.has_value());
    }
  }
}

TEST_CASE("self calls resolve to methods of the same class", "[code-facts]") {
  TempDir dir("selfcall");
  write_repo(dir.path(), {{"c.py",
                           "class Runner:\n"
                           "    def helper(self):\n"
                           "        return 1\n"
                           "    def run(self):\n"
                           "        return self.helper()\n"}});
  auto checkout = make_checkout(dir);
  auto relations = code_facts::extract_call_relations(checkout);
  REQUIRE(relations.size() == 1);
  CHECK(relations[0].caller.qualified_name == "Runner.run");
  REQUIRE(relations[0].callee_resolved.has_value());
  CHECK(relations[0].callee_resolved->qualified_name == "Runner.helper");
}

TEST_CASE("data flow matches the frozen manual analysis", "[code-facts]") {
  TempDir dir("flow");
  write_repo(dir.path(), {{"m.py",
                           "def f(p):\n"
                           "    q = p\n"
                           "    sink(q)\n"
                           "\n"
                           "def g():\n"
                           "    return 1\n"
                           "\n"
                           "def h(a, b):\n"
                           "    return a\n"}});
  auto checkout = make_checkout(dir);

  auto f_fact = code_facts::get_function_code(checkout, "m.py", "f").fact;
  auto f_flow = code_facts::analyze_data_flow(checkout, f_fact);
  // manual analysis of the 3-line body: p->q assignment, q->sink call argument
  REQUIRE(f_flow.edges.size() == 2);
  CHECK(f_flow.edges[0] ==
        code_facts::DataFlowEdge{"p", "q", code_facts::FlowVia::assignment});
  CHECK(f_flow.edges[1] ==
        code_facts::DataFlowEdge{"q", "sink", code_facts::FlowVia::call_argument});

  auto g_flow = code_facts::analyze_data_flow(
      checkout, code_facts::get_function_code(checkout, "m.py", "g").fact);
  REQUIRE(g_flow.edges.size() == 1);
  CHECK(g_flow.edges[0] == code_facts::DataFlowEdge{"1", "return", code_facts::FlowVia::ret});

  auto h_flow = code_facts::analyze_data_flow(
      checkout, code_facts::get_function_code(checkout, "m.py", "h").fact);
  REQUIRE(h_flow.edges.size() == 1);
  CHECK(h_flow.edges[0] == code_facts::DataFlowEdge{"a", "return", code_facts::FlowVia::ret});
}

TEST_CASE("default parameter values produce parameter edges", "[code-facts]") {
  TempDir dir("defaults");
  write_repo(dir.path(), {{"m.py",
                           "def f(x, y=fallback):\n"
                           "    return x\n"}});
  auto checkout = make_checkout(dir);
  auto flow = code_facts::analyze_data_flow(
      checkout, code_facts::get_function_code(checkout, "m.py", "f").fact);
  CHECK(std::find(flow.edges.begin(), flow.edges.end(),
                  code_facts::DataFlowEdge{"fallback", "y",
                                           code_facts::FlowVia::parameter}) != flow.edges.end());
}

// Property: every direct assignment `x = y` in a generated fixture yields the
// edge (y -> x).
TEST_CASE("dataflow completeness floor for direct assignments", "[code-facts]") {
  std::mt19937 rng(7);
  for (int round = 0; round < 25; ++round) {
    TempDir dir("floor");
    std::string body = "def f(seed):\n";
    std::vector<std::pair<std::string, std::string>> assignments;
    std::string prev = "seed";
    int var_count = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < var_count; ++i) {
      std::string var = "v" + std::to_string(i);
      body += "    " + var + " = " + prev + "\n";
      assignments.push_back({prev, var});
      prev = var;
    }
    body += "    return " + prev + "\n";
    write_repo(dir.path(), {{"m.py", body}});
    auto checkout = code_facts::RepoCheckout(dir.path(), "demo", "c1");
    auto flow = code_facts::analyze_data_flow(
        checkout, code_facts::get_function_code(checkout, "m.py", "f").fact);
    for (const auto& [src, dst] : assignments) {
      CHECK(std::find(flow.edges.begin(), flow.edges.end(),
                      code_facts::DataFlowEdge{src, dst, code_facts::FlowVia::assignment}) !=
            flow.edges.end());
    }
  }
}

TEST_CASE("sarif ingestion round-trips results", "[code-facts]") {
  TempDir dir("sarif");
  std::string sarif = R"({
    "version": "2.1.0",
    "runs": [{
      "results": [{
        "ruleId": "py/unsafe-load",
        "message": {"text": "unsafe deserialization"},
        "locations": [{
          "physicalLocation": {
            "artifactLocation": {"uri": "a.py"},
            "region": {"startLine": 10}
          }
        }]
      }]
    }]
  })";
  auto path = dir.path() / "scan.sarif";
  util::write_text_file(path, sarif);

  auto results = code_facts::ingest_sarif(path);
  REQUIRE(results.size() == 1);
  CHECK(results[0].rule_id == "py/unsafe-load");
  CHECK(results[0].file == "a.py");
  CHECK(results[0].line == 10);
  CHECK(results[0].message == "unsafe deserialization");

  util::write_text_file(dir.path() / "empty.sarif", R"({"version":"2.1.0","runs":[]})");
  CHECK(code_facts::ingest_sarif(dir.path() / "empty.sarif").empty());

  util::write_text_file(dir.path() / "broken.sarif", R"({"version":"2.1.0","runs":[)");
  CHECK_THROWS_MATCHES(code_facts::ingest_sarif(dir.path() / "broken.sarif"), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("malformed SARIF")));

  util::write_text_file(dir.path() / "norunss.sarif", R"({"version":"2.1.0"})");
  CHECK_THROWS_MATCHES(code_facts::ingest_sarif(dir.path() / "norunss.sarif"), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("'runs'")));
}

TEST_CASE("operations leave the checkout untouched and are deterministic", "[code-facts]") {
  TempDir dir("readonly");
  write_repo(dir.path(), {{"a.py", "import os\n\ndef f():\n    g(os.path)\n"},
                          {"b.py", "def g(x):\n    return x\n"}});
  auto checkout = make_checkout(dir);

  auto before = util::tree_digest(dir.path());
  auto files1 = code_facts::list_files(checkout);
  auto hits1 = code_facts::search(checkout, "os");
  auto rel1 = code_facts::extract_call_relations(checkout);
  auto imports1 = code_facts::get_imports(checkout, "a.py");
  auto flow1 = code_facts::analyze_data_flow(
      checkout, code_facts::get_function_code(checkout, "b.py", "g").fact);
  auto after = util::tree_digest(dir.path());
  CHECK(before == after);

  // identical inputs -> identical outputs
  CHECK(files1 == code_facts::list_files(checkout));
  CHECK(hits1 == code_facts::search(checkout, "os"));
  CHECK(rel1 == code_facts::extract_call_relations(checkout));
  CHECK(imports1 == code_facts::get_imports(checkout, "a.py"));
  CHECK(flow1 == code_facts::analyze_data_flow(
                     checkout, code_facts::get_function_code(checkout, "b.py", "g").fact));
}
