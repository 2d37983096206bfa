#include "caufc/common.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

namespace caufc {

double SplitMix::next_gaussian() {
  // Box-Muller. u1 is pushed away from zero so log() stays finite.
  double u1 = 1.0 - next_unit();
  double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

int resolve_threads(size_t work_items) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  long cap = 0;
  if (const char* env = std::getenv("CAUFC_THREADS")) {
    char* end = nullptr;
    cap = std::strtol(env, &end, 10);
    if (end == env || cap < 0) cap = 0;
  }
  size_t n = (cap > 0) ? std::min<size_t>(static_cast<size_t>(cap), hw) : hw;
  n = std::min(n, work_items);
  return static_cast<int>(std::max<size_t>(1, n));
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  int workers = resolve_threads(n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (size_t i = static_cast<size_t>(t); i < n; i += static_cast<size_t>(workers)) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void write_file_atomic(const std::filesystem::path& path, const void* data, size_t n) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open for writing: " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      fail("write failure: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail("rename failure: " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail("cannot open: " + path.string());
  std::streamsize n = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> buf(static_cast<size_t>(n));
  if (n > 0) in.read(reinterpret_cast<char*>(buf.data()), n);
  if (!in) fail("read failure: " + path.string());
  return buf;
}

}  // namespace caufc
