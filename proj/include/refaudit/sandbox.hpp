#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <deque>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "nlohmann/json.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/util.hpp"

// PoC execution backends. The subprocess executor runs scripts in an
// isolated scratch directory under resource limits with stdin closed; the
// fake executor replays scripted outcomes for offline tests and records every
// script it receives.
namespace refaudit::sandbox {

using nlohmann::json;

struct SandboxResult {
  std::string log;  // combined stdout + stderr
  int exit_code = 0;
  bool timed_out = false;
  bool started = true;
};

class SandboxExecutor {
 public:
  virtual ~SandboxExecutor() = default;
  virtual SandboxResult run(const std::string& script) = 0;
  virtual std::string kind() const = 0;
};

struct SubprocessLimits {
  int wall_seconds = 20;
  int cpu_seconds = 10;
  long memory_bytes = 512L * 1024 * 1024;
  long file_size_bytes = 8L * 1024 * 1024;
  std::size_t log_cap = 64 * 1024;
};

// Resource-limited /bin/sh execution in a throwaway working directory.
// Each run gets a fresh scratch dir, rlimits, its own process group, and a
// wall-clock watchdog that kills the whole group.
class SubprocessSandbox : public SandboxExecutor {
 public:
  explicit SubprocessSandbox(std::filesystem::path scratch_root, SubprocessLimits limits = {})
      : scratch_root_(std::move(scratch_root)), limits_(limits) {
    std::filesystem::create_directories(scratch_root_);
  }

  SandboxResult run(const std::string& script) override {
    SandboxResult result;
    auto workdir = scratch_root_ / ("run-" + std::to_string(++run_counter_));
    std::filesystem::create_directories(workdir);
    auto script_path = workdir / "poc.sh";
    util::write_text_file(script_path, script);
    auto log_path = workdir / "run.log";

    pid_t pid = fork();
    if (pid < 0) {
      result.started = false;
      result.exit_code = -1;
      result.log = "sandbox fork failed";
      return result;
    }
    if (pid == 0) {
      setpgid(0, 0);
      if (chdir(workdir.c_str()) != 0) _exit(112);

      struct rlimit cpu{static_cast<rlim_t>(limits_.cpu_seconds),
                        static_cast<rlim_t>(limits_.cpu_seconds + 1)};
      setrlimit(RLIMIT_CPU, &cpu);
      struct rlimit mem{static_cast<rlim_t>(limits_.memory_bytes),
                        static_cast<rlim_t>(limits_.memory_bytes)};
      setrlimit(RLIMIT_AS, &mem);
      struct rlimit fsz{static_cast<rlim_t>(limits_.file_size_bytes),
                        static_cast<rlim_t>(limits_.file_size_bytes)};
      setrlimit(RLIMIT_FSIZE, &fsz);

      int devnull = open("/dev/null", O_RDONLY);
      if (devnull >= 0) dup2(devnull, STDIN_FILENO);
      int logfd = open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
      if (logfd >= 0) {
        dup2(logfd, STDOUT_FILENO);
        dup2(logfd, STDERR_FILENO);
      }
      execl("/bin/sh", "sh", script_path.c_str(), static_cast<char*>(nullptr));
      _exit(113);
    }

    setpgid(pid, pid);
    auto deadline =
        std::chrono::steady_clock::now() + std::chrono::seconds(limits_.wall_seconds);
    int status = 0;
    while (true) {
      pid_t done = waitpid(pid, &status, WNOHANG);
      if (done == pid) break;
      if (done < 0) {
        status = -1;
        break;
      }
      if (std::chrono::steady_clock::now() >= deadline) {
        kill(-pid, SIGKILL);
        waitpid(pid, &status, 0);
        result.timed_out = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }

    if (result.timed_out)
      result.exit_code = 124;
    else if (WIFEXITED(status))
      result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
      result.exit_code = 128 + WTERMSIG(status);
    else
      result.exit_code = -1;

    if (std::filesystem::exists(log_path))
      result.log = util::truncate(util::read_text_file(log_path), limits_.log_cap);
    if (result.timed_out) result.log += "\n[sandbox] wall-clock limit exceeded";
    return result;
  }

  std::string kind() const override { return "subprocess"; }

 private:
  std::filesystem::path scratch_root_;
  SubprocessLimits limits_;
  int run_counter_ = 0;
};

// Deterministic test executor: consumes a scripted outcome per run (the last
// one repeats) and records the scripts it was given.
class FakeSandbox : public SandboxExecutor {
 public:
  struct Outcome {
    std::string log;
    int exit_code = 0;
  };

  FakeSandbox() = default;
  explicit FakeSandbox(std::vector<Outcome> outcomes) : outcomes_(std::move(outcomes)) {}

  // Fixture document: {"schema_version":1, "outcomes":[{"log":..,"exit_code":..}]}
  static FakeSandbox from_file(const std::filesystem::path& path) {
    json doc;
    try {
      doc = json::parse(util::read_text_file(path));
    } catch (const json::parse_error& e) {
      throw Error(Errc::format, std::string("malformed sandbox fixture: ") + e.what());
    }
    if (doc.value("schema_version", 0) != 1)
      throw Error(Errc::state, "sandbox fixture schema version mismatch: expected 1");
    std::vector<Outcome> outcomes;
    for (const auto& o : doc.value("outcomes", json::array()))
      outcomes.push_back({o.value("log", ""), o.value("exit_code", 0)});
    return FakeSandbox(std::move(outcomes));
  }

  void push(Outcome outcome) { outcomes_.push_back(std::move(outcome)); }

  SandboxResult run(const std::string& script) override {
    scripts_.push_back(script);
    SandboxResult result;
    if (outcomes_.empty()) {
      result.log = "";
      result.exit_code = 0;
      return result;
    }
    std::size_t index = std::min(scripts_.size() - 1, outcomes_.size() - 1);
    result.log = outcomes_[index].log;
    result.exit_code = outcomes_[index].exit_code;
    return result;
  }

  std::string kind() const override { return "fake"; }

  const std::vector<std::string>& scripts() const { return scripts_; }

 private:
  std::vector<Outcome> outcomes_;
  std::vector<std::string> scripts_;
};

}  // namespace refaudit::sandbox
