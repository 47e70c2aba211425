#include <random>
#include <set>

#include "catch2/catch_amalgamated.hpp"
#include "refaudit/inspection.hpp"
#include "support.hpp"

using namespace refaudit;
using nlohmann::json;
using testsupport::TempDir;
using testsupport::write_repo;

namespace {

const taxonomy::Role kWebUi{"UI and Workflows", "Web UI"};
const taxonomy::Role kCli{"UI and Workflows", "CLI/Developer Workflows"};
const taxonomy::Role kCkpt{"Model Assets and Loading", "Checkpoint Formats"};

repo_semantics::RepositorySemantics synthetic_target() {
  repo_semantics::RepositorySemantics sem;
  sem.project = "target";
  sem.commit = "t1";
  auto add_module = [&](const std::string& id, const taxonomy::Role& role,
                        std::vector<std::string> files) {
    repo_semantics::ModuleDescriptor m;
    m.id = id;
    m.role = role;
    m.label = id;
    m.files = std::move(files);
    sem.modules.push_back(std::move(m));
    sem.graph.nodes.push_back(id);
  };
  add_module("m1", kWebUi, {"webui/a.py"});
  add_module("m2", kCli, {"cli/b.py"});
  add_module("m3", kCkpt, {"ckpt/c.py"});
  sem.graph.edges.push_back({"m2", "m1", 1});  // m2 calls into m1
  return sem;
}

vuln_semantics::VulnerabilitySemantics synthetic_vuln(std::vector<taxonomy::Role> affected) {
  vuln_semantics::VulnerabilitySemantics vuln;
  vuln.advisory_id = "ADV-T";
  vuln.features = {"deserialization", "trigger", "propagation", "scenario", "guard", "boundary"};
  vuln.affected_modules = std::move(affected);
  vuln.reference_project = "ref";
  vuln.reference_commit = "r1";
  return vuln;
}

// Target checkout used by golden runs: a web page shells out to a CLI trainer
// that restores a checkpoint.
void write_target_repo(const std::filesystem::path& root) {
  write_repo(root, {{"webui/a.py",
                     "import os\n"
                     "\n"
                     "def launch(adapter_path):\n"
                     "    cmd = 'python -m cli.b --adapter ' + adapter_path\n"
                     "    os.system(cmd)\n"},
                    {"cli/b.py",
                     "from ckpt.c import restore\n"
                     "\n"
                     "def main(path):\n"
                     "    return restore(path)\n"},
                    {"ckpt/c.py",
                     "import torch\n"
                     "\n"
                     "def restore(path):\n"
                     "    state = torch.load(path)\n"
                     "    return state\n"}});
}

json report_candidate_call() {
  return {{"tool", "report_candidate"},
          {"args",
           {{"file", "ckpt/c.py"},
            {"start_line", 3},
            {"end_line", 5},
            {"function", "restore"},
            {"confidence", "high"},
            {"narrative",
             json::array({{{"file", "webui/a.py"},
                           {"symbol", "launch"},
                           {"role", "source"},
                           {"note", "user-supplied adapter path"}},
                          {{"file", "cli/b.py"},
                           {"symbol", "main"},
                           {"role", "propagation"},
                           {"note", "command-mediated hop"}},
                          {{"file", "ckpt/c.py"},
                           {"symbol", "restore"},
                           {"role", "sink"},
                           {"note", "unsafe torch.load"}}})},
            {"evidence", json::array({"state = torch.load(path)"})}}}};
}

json mark_completed_call(const std::string& file, const std::string& reason) {
  return {{"tool", "mark_file_completed"}, {"args", {{"file", file}, {"reason", reason}}}};
}

}  // namespace

TEST_CASE("prioritize applies the set definitions", "[inspection]") {
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});

  auto part = inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8);
  CHECK(part.p1 == std::set<std::string>{"m1"});
  CHECK(part.p2 == std::set<std::string>{"m2"});
  CHECK(part.p3 == std::set<std::string>{"m3"});

  // every p1 member logged as name_match or embedding; p2 as caller/callee
  for (const auto& [mod, reason] : part.promotion_log) {
    if (part.p1.count(mod))
      CHECK((reason == inspection::PromotionReason::name_match ||
             reason == inspection::PromotionReason::embedding));
    if (part.p2.count(mod))
      CHECK((reason == inspection::PromotionReason::caller_of_p1 ||
             reason == inspection::PromotionReason::callee_of_p1));
  }
}

TEST_CASE("absent affected roles with zero similarity put everything in p3", "[inspection]") {
  auto target = synthetic_target();
  auto part = inspection::prioritize_with(
      target, {{"RAG and Retrieval", "Hybrid Search"}},
      [](const repo_semantics::ModuleDescriptor&, const taxonomy::Role&) { return 0.0; }, 0.8);
  CHECK(part.p1.empty());
  CHECK(part.p2.empty());
  CHECK(part.p3 == std::set<std::string>{"m1", "m2", "m3"});
}

TEST_CASE("identical descriptor text promotes through the embedding route", "[inspection]") {
  auto target = synthetic_target();
  taxonomy::Role affected{"RAG and Retrieval", "Hybrid Search"};
  auto part = inspection::prioritize_with(
      target, {affected},
      [&](const repo_semantics::ModuleDescriptor& m, const taxonomy::Role&) {
        return m.id == "m3" ? 1.0 : 0.0;
      },
      0.8);
  CHECK(part.p1 == std::set<std::string>{"m3"});
  bool logged_embedding = false;
  for (const auto& [mod, reason] : part.promotion_log)
    if (mod == "m3" && reason == inspection::PromotionReason::embedding) logged_embedding = true;
  CHECK(logged_embedding);
}

TEST_CASE("embedder failure degrades to a name-only partition", "[inspection]") {
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  llm::ScriptedEmbedder failing;  // knows no texts -> throws on use
  std::vector<std::string> diagnostics;
  auto part = inspection::prioritize(target, vuln, &failing, 0.8, nullptr, &diagnostics);
  CHECK(part.degraded);
  CHECK(part.p1 == std::set<std::string>{"m1"});
  REQUIRE(!diagnostics.empty());
  CHECK(diagnostics[0].find("embedding promotion skipped") != std::string::npos);
}

TEST_CASE("unassigned files form a p3 pseudo-module", "[inspection]") {
  auto target = synthetic_target();
  target.unassigned = {"stray/notes.py"};
  auto part = inspection::prioritize_with(target, {kWebUi}, nullptr, 0.8);
  CHECK(part.p3.count(inspection::kUnassignedModule) == 1);

  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(target, vuln, part);
  CHECK(memory.module_of.at("stray/notes.py") ==
        std::vector<std::string>{inspection::kUnassignedModule});
}

TEST_CASE("init_memory orders pending files p1 then p2 then p3", "[inspection]") {
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto part = inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8);
  auto memory = inspection::init_memory(target, vuln, part);

  CHECK(memory.scope_order ==
        std::vector<std::string>{"webui/a.py", "cli/b.py", "ckpt/c.py"});
  CHECK(memory.iteration_count == 0);
  for (const auto& [_, st] : memory.file_status)
    CHECK(st.status == inspection::FileStatus::pending);
  CHECK(memory.scope_boundary.find("priority 1 and priority 2") != std::string::npos);

  SECTION("empty p1 starts with p2") {
    auto part2 = inspection::prioritize_with(
        target, {{"RAG and Retrieval", "Hybrid Search"}},
        [](const repo_semantics::ModuleDescriptor& m, const taxonomy::Role&) {
          return m.id == "m2" ? 1.0 : 0.0;  // only m2 promotes
        },
        0.8);
    CHECK(part2.p1 == std::set<std::string>{"m2"});
    auto memory2 = inspection::init_memory(target, vuln, part2);
    CHECK(memory2.scope_order.front() == "cli/b.py");
  }
}

TEST_CASE("memory serialization round-trips", "[inspection]") {
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto part = inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8);
  auto memory = inspection::init_memory(target, vuln, part);
  memory.iteration_count = 2;
  memory.rejected_hypotheses.push_back("the cli path never reaches torch.load");
  memory.file_status["webui/a.py"] = {inspection::FileStatus::completed, "reviewed"};
  inspection::Candidate c;
  c.id = "ADV-T#1";
  c.file = "ckpt/c.py";
  c.start_line = 3;
  c.end_line = 5;
  c.narrative = {{"webui/a.py", "launch", vuln_semantics::ChainRole::source, ""},
                 {"ckpt/c.py", "restore", vuln_semantics::ChainRole::sink, ""}};
  c.confidence = inspection::Confidence::high;
  c.reference_advisory = "ADV-T";
  memory.candidates.push_back(c);

  auto restored = inspection::memory_from_json(inspection::memory_to_json(memory));
  CHECK(restored == memory);

  json wrong_version = inspection::memory_to_json(memory);
  wrong_version["schema_version"] = 9;
  CHECK_THROWS_AS(inspection::memory_from_json(wrong_version), Error);
}

TEST_CASE("golden run: search, read, report, complete", "[inspection]") {
  TempDir dir("golden");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto part = inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8);
  auto memory = inspection::init_memory(target, vuln, part);

  llm::ScriptedBackend backend;
  backend.add_sequence(
      "inspection",
      json{{"text", "scanning for the sink"},
           {"tool_calls", json::array({{{"tool", "search_in_folder"},
                                        {"args", {{"pattern", R"(torch\.load)"}}}}})}});
  backend.add_sequence(
      "inspection",
      json{{"text", "reading the sink function"},
           {"tool_calls",
            json::array({{{"tool", "get_function_code"},
                          {"args", {{"file", "ckpt/c.py"}, {"name_or_line", "restore"}}}}})}});
  backend.add_sequence("inspection",
                       json{{"text", "reporting"},
                            {"tool_calls", json::array({report_candidate_call(),
                                                        mark_completed_call(
                                                            "webui/a.py", "source reviewed")})},
                            {"complete", true}});

  inspection::InspectionEngine engine(checkout, target, vuln, backend, nullptr, {});
  auto fresh = engine.run_iteration(memory);

  REQUIRE(fresh.size() == 1);
  CHECK(fresh[0].file == "ckpt/c.py");
  CHECK(fresh[0].id == "ADV-T#1");
  CHECK(memory.iteration_count == 1);
  CHECK(memory.file_status.at("webui/a.py").status == inspection::FileStatus::completed);
  CHECK(memory.file_status.at("webui/a.py").reason == "source reviewed");
  CHECK(memory.candidates.size() == 1);
}

TEST_CASE("zero tool calls end the iteration with only the counter changed", "[inspection]") {
  TempDir dir("zerocalls");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  auto before = inspection::memory_to_json(memory);

  llm::ScriptedBackend backend;
  backend.add_sequence("inspection", json{{"text", "nothing to do"}});
  inspection::InspectionEngine engine(checkout, target, vuln, backend, nullptr, {});
  auto fresh = engine.run_iteration(memory);
  CHECK(fresh.empty());
  CHECK(memory.iteration_count == 1);
  auto after = inspection::memory_to_json(memory);
  before["iteration_count"] = 1;
  CHECK(after == before);
}

TEST_CASE("turn budget truncates the turn but keeps partial progress", "[inspection]") {
  TempDir dir("budget");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));

  llm::ScriptedBackend backend;
  backend.add_sequence(
      "inspection",
      json{{"text", "batch"},
           {"tool_calls", json::array({mark_completed_call("webui/a.py", "done"),
                                       mark_completed_call("cli/b.py", "done"),
                                       mark_completed_call("ckpt/c.py", "done")})}});
  inspection::EngineConfig cfg;
  cfg.turn.max_tool_calls = 2;
  inspection::InspectionEngine engine(checkout, target, vuln, backend, nullptr, cfg);
  engine.run_iteration(memory);

  CHECK(memory.file_status.at("webui/a.py").status == inspection::FileStatus::completed);
  CHECK(memory.file_status.at("cli/b.py").status == inspection::FileStatus::completed);
  CHECK(memory.file_status.at("ckpt/c.py").status == inspection::FileStatus::pending);
  bool noted = false;
  for (const auto& d : memory.diagnostics)
    if (d.find("turn budget") != std::string::npos) noted = true;
  CHECK(noted);
}

TEST_CASE("backend failure mid-turn keeps the memory and counts the iteration",
          "[inspection]") {
  TempDir dir("midfail");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));

  llm::ScriptedBackend backend;
  backend.add_sequence(
      "inspection",
      json{{"text", "progress"},
           {"tool_calls", json::array({mark_completed_call("webui/a.py", "done")})}});
  // second exchange missing -> backend error mid-turn
  inspection::InspectionEngine engine(checkout, target, vuln, backend, nullptr, {});
  engine.run_iteration(memory);
  CHECK(memory.iteration_count == 1);
  CHECK(memory.file_status.at("webui/a.py").status == inspection::FileStatus::completed);
  bool noted = false;
  for (const auto& d : memory.diagnostics)
    if (d.find("backend failure mid-turn") != std::string::npos) noted = true;
  CHECK(noted);
}

TEST_CASE("candidate duplicates merge keeping the highest confidence", "[inspection]") {
  TempDir dir("dedup");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  inspection::InspectionToolbox toolbox(checkout, target, memory, nullptr);

  auto call = report_candidate_call();
  call["args"]["confidence"] = "low";
  auto first = toolbox.dispatch({"report_candidate", call["args"], "c1"});
  CHECK(first["merged"] == false);

  auto overlapping = report_candidate_call();
  overlapping["args"]["start_line"] = 4;  // overlaps 3..5, same sink
  overlapping["args"]["confidence"] = "high";
  auto second = toolbox.dispatch({"report_candidate", overlapping["args"], "c2"});
  CHECK(second["merged"] == true);
  REQUIRE(memory.candidates.size() == 1);
  CHECK(memory.candidates[0].confidence == inspection::Confidence::high);
}

TEST_CASE("candidates with unresolvable locations are rejected at report time",
          "[inspection]") {
  TempDir dir("badloc");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  inspection::InspectionToolbox toolbox(checkout, target, memory, nullptr);

  auto call = report_candidate_call();
  call["args"]["file"] = "ckpt/phantom.py";
  auto result = toolbox.dispatch({"report_candidate", call["args"], "c1"});
  CHECK(result.contains("error"));
  CHECK(memory.candidates.empty());
}

TEST_CASE("completed files never regress to pending", "[inspection]") {
  TempDir dir("monotone");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  inspection::InspectionToolbox toolbox(checkout, target, memory, nullptr);

  toolbox.dispatch({"mark_file_completed",
                    json{{"file", "webui/a.py"}, {"reason", "first pass"}}, "c1"});
  toolbox.dispatch({"mark_file_completed",
                    json{{"file", "webui/a.py"}, {"reason", "second pass"}}, "c2"});
  CHECK(memory.file_status.at("webui/a.py").reason == "first pass");

  auto status = toolbox.dispatch({"check_file_status", json{{"file", "webui/a.py"}}, "c3"});
  CHECK(status["status"] == "completed");
  auto unknown = toolbox.dispatch({"check_file_status", json{{"file", "nope.py"}}, "c4"});
  CHECK(unknown["status"] == "out_of_scope");
}

TEST_CASE("compaction is a no-op under budget and bounded above it", "[inspection]") {
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));

  std::vector<llm::Message> small = {{"system", "short prompt"}, {"user", "short context"}};
  auto no_op = inspection::compact_context(small, memory, 100000, 0.2);
  CHECK_FALSE(no_op.compacted);
  CHECK(no_op.messages.size() == small.size());

  std::vector<llm::Message> big = {{"system", "prompt"}};
  for (int i = 0; i < 30; ++i) {
    big.push_back({"assistant",
                   json{{"text", "t"},
                        {"tool_calls", json::array({{{"tool", "search_in_folder"},
                                                     {"args", json::object()}}})}}
                       .dump()});
    big.push_back({"tool", json{{"tool", "search_in_folder"},
                                {"result", {{"error", "failure " + std::to_string(i)}}}}
                               .dump()});
  }
  big.push_back({"user", std::string(4000, 'z')});

  int window = 2600;
  auto z_before = inspection::memory_to_json(memory).dump();
  auto compacted = inspection::compact_context(big, memory, window, 0.2);
  auto z_after = inspection::memory_to_json(memory).dump();
  CHECK(compacted.compacted);
  CHECK(z_before == z_after);  // Z untouched, bit-identical
  long predicted = llm::detail::predicted_request_tokens(compacted.messages, nullptr);
  CHECK(predicted <= static_cast<long>(window * 0.8));
  // failures survive into the summary
  bool kept_failure = false;
  for (const auto& m : compacted.messages)
    if (m.content.find("failure 0") != std::string::npos) kept_failure = true;
  CHECK(kept_failure);
}

TEST_CASE("oversized summaries hard-truncate and stay within budget", "[inspection]") {
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));

  std::vector<llm::Message> messages = {{"system", "prompt"}};
  for (int i = 0; i < 400; ++i)
    messages.push_back({"tool", json{{"tool", "search_in_folder"},
                                     {"result", {{"error", "long failure record " +
                                                               std::string(40, 'x') +
                                                               std::to_string(i)}}}}
                                    .dump()});
  messages.push_back({"user", std::string(9000, 'q')});

  int window = 1500;
  auto compacted = inspection::compact_context(messages, memory, window, 0.2);
  CHECK(compacted.compacted);
  CHECK(compacted.hard_truncated);
  CHECK(llm::detail::predicted_request_tokens(compacted.messages, nullptr) <=
        static_cast<long>(window * 0.8));
}

TEST_CASE("shared memory distillation and the read tool round-trip", "[inspection]") {
  TempDir dir("shared");
  TempDir state("sharedstate");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  memory.file_status["ckpt/c.py"] = {inspection::FileStatus::completed, "dataflow analyzed"};

  inspection::SharedMemoryStore shared(state.path());

  llm::ScriptedBackend backend;
  backend.add_sequence(
      "distill",
      json{{"text", json(json::array({{{"module", "m3"},
                                       {"observation",
                                        "restore() loads adapter state straight from the "
                                        "path argument"}}}))
                        .dump()}});
  inspection::InspectionEngine engine(checkout, target, vuln, backend, &shared, {});
  auto entries = engine.distill_shared_memory(memory);
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].scope_key == "m3");
  CHECK(entries[0].run_id == "ADV-T@target@t1");
  shared.append(entries);

  inspection::InspectionToolbox toolbox(checkout, target, memory, &shared);
  auto result = toolbox.dispatch({"read_shared_memory", json::object(), "c1"});
  REQUIRE(result["entries"].size() == 1);
  CHECK(result["entries"][0]["observation"] == entries[0].observation);

  SECTION("distillation failure yields no entries") {
    llm::ScriptedBackend silent;
    inspection::InspectionEngine engine2(checkout, target, vuln, silent, &shared, {});
    CHECK(engine2.distill_shared_memory(memory).empty());
  }

  SECTION("empty runs distill nothing") {
    llm::ScriptedBackend empty_backend;
    empty_backend.add_sequence("distill", json{{"text", "[]"}});
    inspection::InspectionEngine engine3(checkout, target, vuln, empty_backend, &shared, {});
    auto memory_clean = inspection::init_memory(
        target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
    CHECK(engine3.distill_shared_memory(memory_clean).empty());
  }
}

TEST_CASE("inspect_target stops once the critical scope completes", "[inspection]") {
  TempDir dir("stop2");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  // critical scope: p1 webui/a.py + p2 cli/b.py

  llm::ScriptedBackend backend;
  backend.add_sequence("inspection",
                       json{{"text", "iteration 1"},
                            {"tool_calls",
                             json::array({mark_completed_call("webui/a.py", "reviewed")})},
                            {"complete", true}});
  backend.add_sequence("inspection",
                       json{{"text", "iteration 2"},
                            {"tool_calls",
                             json::array({mark_completed_call("cli/b.py", "reviewed")})},
                            {"complete", true}});

  inspection::EngineConfig cfg;
  cfg.max_iterations = 3;
  inspection::InspectionEngine engine(checkout, target, vuln, backend, nullptr, cfg);
  int persists = 0;
  engine.inspect_target(memory, [&](const inspection::InspectionMemory&) { ++persists; });
  CHECK(memory.iteration_count == 2);  // stopped early, not at the cap
  CHECK(persists == 2);
  CHECK(memory.critical_scope_done());
}

TEST_CASE("an agent that never finishes runs exactly the iteration cap", "[inspection]") {
  TempDir dir("cap");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));

  llm::ScriptedBackend backend;
  backend.set_repeat("inspection", json{{"text", "still looking"}});
  inspection::EngineConfig cfg;
  cfg.max_iterations = 3;
  inspection::InspectionEngine engine(checkout, target, vuln, backend, nullptr, cfg);
  engine.inspect_target(memory);
  CHECK(memory.iteration_count == 3);
}

TEST_CASE("a killed run resumes from persisted memory without re-inspection",
          "[inspection]") {
  TempDir dir("resume");
  TempDir state("resumestate");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  auto memory_path = state.path() / "memory.json";

  // first process: one iteration, then the process dies
  {
    llm::ScriptedBackend backend;
    backend.add_sequence("inspection",
                         json{{"text", "iteration 1"},
                              {"tool_calls",
                               json::array({mark_completed_call("webui/a.py", "reviewed")})},
                              {"complete", true}});
    inspection::EngineConfig cfg;
    cfg.max_iterations = 1;  // simulates the kill after iteration 1
    inspection::InspectionEngine engine(checkout, target, vuln, backend, nullptr, cfg);
    engine.inspect_target(memory, [&](const inspection::InspectionMemory& m) {
      util::write_text_file(memory_path, inspection::memory_to_json(m).dump());
    });
  }

  // second process: reload and continue under the full cap
  auto resumed = inspection::memory_from_json(
      json::parse(util::read_text_file(memory_path)));
  CHECK(resumed.iteration_count == 1);
  CHECK(resumed.file_status.at("webui/a.py").status == inspection::FileStatus::completed);

  // the rebuilt context no longer offers the completed file
  auto context = inspection::build_context(vuln, resumed);
  CHECK(context.find("remaining critical-scope files: cli/b.py") != std::string::npos);

  llm::ScriptedBackend backend2;
  backend2.add_sequence("inspection",
                        json{{"text", "iteration 2"},
                             {"tool_calls",
                              json::array({mark_completed_call("cli/b.py", "reviewed")})},
                             {"complete", true}});
  inspection::EngineConfig cfg2;
  cfg2.max_iterations = 3;
  inspection::InspectionEngine engine2(checkout, target, vuln, backend2, nullptr, cfg2);
  engine2.inspect_target(resumed, [&](const inspection::InspectionMemory& m) {
    util::write_text_file(memory_path, inspection::memory_to_json(m).dump());
  });
  CHECK(resumed.iteration_count == 2);
  CHECK(resumed.file_status.at("webui/a.py").reason == "reviewed");
  CHECK(resumed.critical_scope_done());
}

TEST_CASE("module graph and related-file tools answer from the semantics", "[inspection]") {
  TempDir dir("tools");
  write_target_repo(dir.path());
  code_facts::RepoCheckout checkout(dir.path(), "target", "t1");
  auto target = synthetic_target();
  auto vuln = synthetic_vuln({kWebUi});
  auto memory = inspection::init_memory(
      target, vuln, inspection::prioritize_with(target, vuln.affected_modules, nullptr, 0.8));
  inspection::InspectionToolbox toolbox(checkout, target, memory, nullptr);

  auto edges = toolbox.dispatch({"get_module_call_relationships", json{{"module", "m1"}}, "c"});
  REQUIRE(edges["edges"].size() == 1);
  CHECK(edges["edges"][0]["caller"] == "m2");

  auto related = toolbox.dispatch({"get_related_files", json{{"file", "cli/b.py"}}, "c"});
  CHECK(related["callees"] == json::array({"ckpt/c.py"}));

  auto status = toolbox.dispatch({"read_sarif_results", json::object(), "c"});
  CHECK(status.contains("results"));

  auto hypothesis = toolbox.dispatch(
      {"record_rejected_hypothesis", json{{"note", "os.environ is not a source here"}}, "c"});
  CHECK(hypothesis["recorded"] == true);
  REQUIRE(memory.rejected_hypotheses.size() == 1);
}
