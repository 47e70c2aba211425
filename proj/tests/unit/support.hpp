#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "refaudit/util.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fixtures_root() { return fs::path(REFAUDIT_TEST_FIXTURES); }

// Scratch directory removed on destruction. Test repos are materialized here
// so the checked-in fixtures stay pristine.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("refaudit-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(++counter));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline void write_repo(const fs::path& root,
                       const std::map<std::string, std::string>& files) {
  for (const auto& [rel, content] : files)
    refaudit::util::write_text_file(root / rel, content);
}

}  // namespace testsupport
