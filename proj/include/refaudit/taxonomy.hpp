#pragma once

#include <compare>
#include <string>
#include <vector>

#include "refaudit/errors.hpp"

namespace refaudit::taxonomy {

// Two-level module role: a coarse category plus one of its second-level roles.
struct Role {
  std::string coarse;
  std::string second;

  std::string render() const { return coarse + " :: " + second; }

  auto operator<=>(const Role&) const = default;
  bool operator==(const Role&) const = default;
};

struct RoleCategory {
  std::string name;
  std::string definition;
  std::vector<std::string> second_level;
};

// Fixed two-level vocabulary of AI-infra module functionality. Module
// assignment, affected-module recovery, and module-set similarity all share
// this vocabulary so that module identity is comparable across repositories.
class RoleTaxonomy {
 public:
  explicit RoleTaxonomy(std::vector<RoleCategory> categories)
      : categories_(std::move(categories)) {}

  static const RoleTaxonomy& builtin();

  const std::vector<RoleCategory>& categories() const { return categories_; }

  bool valid(const Role& role) const {
    for (const auto& cat : categories_) {
      if (cat.name != role.coarse) continue;
      for (const auto& s : cat.second_level)
        if (s == role.second) return true;
    }
    return false;
  }

  Role require(const std::string& coarse, const std::string& second) const {
    Role r{coarse, second};
    if (!valid(r))
      throw Error(Errc::schema, "role not in taxonomy: " + r.render());
    return r;
  }

  std::vector<Role> all_roles() const {
    std::vector<Role> out;
    for (const auto& cat : categories_)
      for (const auto& s : cat.second_level) out.push_back({cat.name, s});
    return out;
  }

 private:
  std::vector<RoleCategory> categories_;
};

inline const RoleTaxonomy& RoleTaxonomy::builtin() {
  static const RoleTaxonomy instance{{
      {"Platform Systems",
       "Builds, packages, configures, and orchestrates the runtime substrate "
       "that hosts local, containerized, or distributed AI workloads.",
       {"Build Packaging", "Runtime Hardware", "Distributed Orchestration"}},
      {"Data Knowledge",
       "Ingests, normalizes, chunks, stores, and retrieves datasets or "
       "external knowledge consumed by models and applications.",
       {"Ingestion Connectors", "Dataset Construction", "Preprocess Tokenization",
        "Storage Formats", "Knowledge Stores"}},
      {"Model Assets and Loading",
       "Defines model assets and the paths that load them: architectures, "
       "checkpoints, tokenizers, processors, and runtime configuration.",
       {"Model Definition", "Checkpoint Formats", "Loading Configuration",
        "Tokenizers/Processors", "Export Interchange"}},
      {"Training and Optimization",
       "Runs training loops, distributed optimization, checkpointing, and "
       "experiment configuration.",
       {"Training Loop", "Distributed Training", "Optimizer Schedules",
        "Checkpoint/Finetuning", "Experiment Configurations"}},
      {"Post-Training and Alignment",
       "Adapts pretrained models via supervised finetuning, PEFT, preference "
       "optimization, RLHF/RLAIF, or distillation-style procedures.",
       {"Supervised Finetuning", "Parameter Efficient Finetuning",
        "Preference Learning", "RLHF/RLAIF",
        "Distillation/Quantization Aware Training"}},
      {"Inference and Acceleration",
       "Executes trained models efficiently: inference runtimes, cache and "
       "memory control, parallelism, kernels, and performance measurement.",
       {"Inference Runtime", "KV Cache/Memory", "Inference Parallelism",
        "Quantized Kernels", "Performance Benchmarking"}},
      {"Serving and Deployment",
       "Exposes models or AI workflows through APIs, deployable services, "
       "routing, authentication, and runtime boundaries.",
       {"Serving API", "Deployment Assets", "Autoscaling/Routing",
        "Authentication/Rate Limiting", "Multi Tenant Isolation"}},
      {"RAG and Retrieval",
       "Builds retrieval pipelines: document loading, embedding indexes, "
       "retrieval and reranking, and citation attachment.",
       {"Document Loaders/Chunking", "Embedding/Indexing", "Retrieval/Reranking",
        "Citation Attribution", "Hybrid Search"}},
      {"Agents and Tooling",
       "Implements agent control loops, tool or function calling, planning "
       "orchestration, memory state, and plugin integrations.",
       {"Tool/Function Calling", "Planning/Orchestration", "Memory State",
        "Integrations/Plugins"}},
      {"Evaluation and Benchmarking",
       "Measures quality, safety, performance, and regression behavior for "
       "models, pipelines, or applications.",
       {"Quality Evaluation", "Safety Evaluation", "Performance Evaluation",
        "Regression Tests"}},
      {"Observability and LLMOps",
       "Tracks experiments, registers models, collects traces, metrics, and "
       "logs, and supports CI/CD or governance workflows.",
       {"Experiment Tracking", "Model Registry", "Tracing/Metrics/Logs",
        "CI/CD Governance"}},
      {"UI and Workflows",
       "Provides web interfaces, workflow builders, CLI and developer "
       "workflows, templates, and examples.",
       {"Web UI", "Workflow Builder", "CLI/Developer Workflows",
        "Templates/Examples"}},
  }};
  return instance;
}

}  // namespace refaudit::taxonomy
