#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "refaudit/errors.hpp"
#include "refaudit/llm_gateway.hpp"
#include "refaudit/repo_semantics.hpp"
#include "refaudit/taxonomy.hpp"
#include "refaudit/util.hpp"

// Similarity math for target selection and module promotion: embedding text
// similarity, set Jaccard, the equally weighted five-component repository
// score, the selection rules, and the module-promotion similarity compared
// against tau_M.
namespace refaudit::similarity {

struct SimilarityBreakdown {
  double description_sim = 0.0;
  double application_sim = 0.0;
  double user_sim = 0.0;
  double module_jaccard = 0.0;
  double dependency_jaccard = 0.0;
  double overall = 0.0;  // arithmetic mean of the five components

  bool operator==(const SimilarityBreakdown&) const = default;
};

inline SimilarityBreakdown make_breakdown(double description, double application, double user,
                                          double modules, double deps) {
  SimilarityBreakdown b{description, application, user, modules, deps, 0.0};
  b.overall = (description + application + user + modules + deps) / 5.0;
  return b;
}

// Cosine of unit-normalized embeddings, clamped into [0, 1]; embedding
// models can emit slightly negative cosines and every component lives in the
// unit interval.
inline double text_similarity(const std::string& a, const std::string& b,
                              llm::EmbeddingBackend& embedder,
                              llm::TokenLedger* ledger = nullptr,
                              const std::string& stage = "profiling") {
  if (a.empty() || b.empty())
    throw Error(Errc::precondition, "text_similarity requires non-empty texts");
  auto vectors = llm::embed(embedder, {a, b}, ledger, stage);
  return util::clamp01(llm::cosine(vectors[0], vectors[1]));
}

// |a ∩ b| / |a ∪ b| with the empty-vs-empty convention fixed at 0.0: an
// unprofiled repository must not rank as a perfect match.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a)
    if (b.count(x)) ++inter;
  std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::set<std::string> dependency_set(const repo_semantics::RepositorySemantics& sem) {
  return {sem.summary.key_dependencies.begin(), sem.summary.key_dependencies.end()};
}

inline SimilarityBreakdown score_pair(const repo_semantics::RepositorySemantics& ref,
                                      const repo_semantics::RepositorySemantics& tgt,
                                      llm::EmbeddingBackend& embedder,
                                      llm::TokenLedger* ledger = nullptr) {
  double description =
      text_similarity(ref.summary.description, tgt.summary.description, embedder, ledger);
  double application = text_similarity(ref.summary.application_scenario,
                                       tgt.summary.application_scenario, embedder, ledger);
  double user = text_similarity(ref.summary.target_user, tgt.summary.target_user, embedder, ledger);
  double modules = jaccard(ref.role_set(), tgt.role_set());
  double deps = jaccard(dependency_set(ref), dependency_set(tgt));
  return make_breakdown(description, application, user, modules, deps);
}

// ---------------------------------------------------------------------------
// target selection

struct RankedCandidate {
  std::string project;
  std::string commit;
  SimilarityBreakdown score;

  bool operator==(const RankedCandidate&) const = default;
};

enum class SelectionRule { threshold, top5_supplement };

inline const char* selection_rule_name(SelectionRule r) {
  return r == SelectionRule::threshold ? "threshold" : "top5_supplement";
}

struct TargetSelection {
  std::vector<RankedCandidate> ranked;    // by overall descending
  std::vector<RankedCandidate> selected;  // ordered sublist of ranked
  SelectionRule rule_applied = SelectionRule::threshold;
  std::optional<std::pair<std::string, std::string>> extra_same_project;
};

// Pure selection core over already-scored candidates. Keep every candidate
// at or above the threshold when at least three qualify; otherwise supplement
// to the top `supplement` most similar. A same-project alternate revision is
// carried as an extra scan target regardless of its score. Ties break by
// lexicographic (project, commit).
inline TargetSelection select_from_scored(const std::string& ref_project,
                                          const std::string& ref_commit,
                                          std::vector<RankedCandidate> scored,
                                          double keep_threshold = 0.5, int supplement = 5) {
  TargetSelection sel;
  std::sort(scored.begin(), scored.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score.overall != b.score.overall) return a.score.overall > b.score.overall;
    if (a.project != b.project) return a.project < b.project;
    return a.commit < b.commit;
  });
  sel.ranked = scored;

  std::size_t passing = 0;
  for (const auto& c : scored)
    if (c.score.overall >= keep_threshold) ++passing;

  if (passing >= 3) {
    sel.rule_applied = SelectionRule::threshold;
    for (const auto& c : scored)
      if (c.score.overall >= keep_threshold) sel.selected.push_back(c);
  } else {
    sel.rule_applied = SelectionRule::top5_supplement;
    std::size_t take = std::min<std::size_t>(scored.size(), static_cast<std::size_t>(supplement));
    sel.selected.assign(scored.begin(), scored.begin() + take);
  }

  for (const auto& c : scored) {
    if (c.project != ref_project || c.commit == ref_commit) continue;
    bool already = std::any_of(sel.selected.begin(), sel.selected.end(),
                               [&](const RankedCandidate& s) {
                                 return s.project == c.project && s.commit == c.commit;
                               });
    if (!already) {
      sel.extra_same_project = {c.project, c.commit};
      break;
    }
  }
  return sel;
}

inline TargetSelection select_targets(const repo_semantics::RepositorySemantics& ref,
                                      const std::vector<repo_semantics::RepositorySemantics>& candidates,
                                      llm::EmbeddingBackend& embedder,
                                      llm::TokenLedger* ledger = nullptr,
                                      double keep_threshold = 0.5, int supplement = 5) {
  if (candidates.empty())
    throw Error(Errc::precondition, "select_targets requires at least one candidate");
  std::vector<RankedCandidate> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates)
    scored.push_back({c.project, c.commit, score_pair(ref, c, embedder, ledger)});
  return select_from_scored(ref.project, ref.commit, std::move(scored), keep_threshold,
                            supplement);
}

// Embedding similarity between a module's descriptor text and an affected
// role rendered as "coarse :: second-level". The caller compares the result
// against tau_M; the threshold itself is inclusive.
inline std::string descriptor_text(const repo_semantics::ModuleDescriptor& module) {
  std::string text = module.label + " | " + module.role.render();
  if (!module.feature_notes.empty()) text += " | " + module.feature_notes;
  return text;
}

inline double module_promotion_sim(const repo_semantics::ModuleDescriptor& module,
                                   const taxonomy::Role& affected_role,
                                   llm::EmbeddingBackend& embedder,
                                   llm::TokenLedger* ledger = nullptr) {
  std::string text = descriptor_text(module);
  if (text.empty())
    throw Error(Errc::precondition, "module descriptor text must be non-empty");
  return text_similarity(text, affected_role.render(), embedder, ledger, "inspection");
}

}  // namespace refaudit::similarity
