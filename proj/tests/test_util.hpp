#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#ifndef _WIN32
#include <unistd.h>
#endif

namespace testutil {

// Scratch directory removed when the test scope exits.
class TempDir {
public:
  TempDir() {
    static std::atomic<uint64_t> counter{0};
#ifndef _WIN32
    int pid = getpid();
#else
    int pid = 0;
#endif
    path_ = std::filesystem::temp_directory_path() /
            ("caufc_test_" + std::to_string(pid) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace testutil
