#pragma once

#include <map>
#include <string>

#include "refaudit/errors.hpp"
#include "refaudit/llm_gateway.hpp"

namespace refaudit::prompts {

// System prompts, addressed by stable id. The scripted backend keys its
// fixtures on these ids, so renaming one invalidates recorded fixtures.
inline const std::map<std::string, std::string>& table() {
  static const std::map<std::string, std::string> prompts = {
      {"module-assign",
       "You classify repository files into module roles from a fixed two-level "
       "taxonomy. For each file you receive the path and a source snippet. "
       "Reply with a JSON array, one entry per file: "
       "{\"file\": <path>, \"roles\": [[<coarse>, <second-level>], ...], "
       "\"note\": <short functional description>}. Use only roles present in "
       "the taxonomy provided in the request. A file may carry several roles "
       "when it genuinely implements several functions."},
      {"repo-summary",
       "You profile a software repository from its readme material and module "
       "labels. Reply with a JSON object: {\"description\": <what the project "
       "is>, \"application_scenario\": <where and how it is applied>, "
       "\"target_user\": <who operates it>}. Every field must be non-empty "
       "and grounded in the provided material."},
      {"vuln-features",
       "You distill the trigger semantics of a disclosed vulnerability from "
       "its witness call chain, payload note, and code snippets. Reply with a "
       "JSON object containing exactly these six non-empty string fields: "
       "vuln_family, trigger_condition, propagation_constraints, "
       "exploitable_scenario, missing_guard, trust_boundary. Describe the "
       "chain entries in their given order from source to sink."},
      {"inspection",
       "You audit one target repository for variants of a reference "
       "vulnerability. Work only through the provided tools; prioritize files "
       "in the listed tier order. Record every suspected variant with "
       "report_candidate (location, ordered source-to-sink narrative, "
       "supporting evidence, confidence). Mark each file you finish with "
       "mark_file_completed and a reason; record dead ends with "
       "record_rejected_hypothesis. The engine tracks progress only through "
       "these tool calls. Reply with {\"complete\": true} once the critical "
       "scope is covered or you have nothing further to inspect."},
      {"distill",
       "You compress one finished inspection run into at most the requested "
       "number of reusable observations for future runs over the same "
       "repository. Reply with a JSON array of {\"module\": <module id>, "
       "\"observation\": <compact reusable fact, e.g. a data-flow summary>}. "
       "Skip speculation; keep only observations grounded in the run."},
      {"classify",
       "You judge a statically checked vulnerability candidate. All location "
       "claims have already been verified against the target repository; you "
       "choose between the two exploitable outcomes. Reply with a JSON "
       "object: {\"kind\": \"exploitable\" | \"conditionally_exploitable\", "
       "\"rationale\": <why>, \"preconditions\": [<explicit input or "
       "deployment preconditions>]}. conditionally_exploitable requires at "
       "least one precondition."},
      {"poc",
       "You write a minimal proof-of-concept script that demonstrates "
       "reachability of a candidate vulnerability inside an isolated sandbox. "
       "The script must print the provided sink marker if and only if the "
       "sink is reached. Reply with a JSON object {\"description\": <one "
       "line>, \"script\": <POSIX sh script text>}. Prior attempt logs, when "
       "present, explain what to fix."},
  };
  return prompts;
}

inline llm::Message system_message(const std::string& id) {
  auto it = table().find(id);
  if (it == table().end())
    throw Error(Errc::precondition, "unknown system prompt id: " + id);
  return {"system", it->second};
}

}  // namespace refaudit::prompts
