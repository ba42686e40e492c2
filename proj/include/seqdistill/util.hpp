// Worker-pool helper and JSON conversion bits shared across modules.
//
// Parallel work in this project always follows the same pattern: independent
// results are computed into index-addressed slots and reduced sequentially in
// index order, so outputs are bit-identical for any worker count. The env var
// SEQDISTILL_THREADS caps the pool.
#pragma once

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "seqdistill/error.hpp"
#include "seqdistill/linalg.hpp"

namespace seqdistill {

inline unsigned worker_count(std::size_t n_items) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("SEQDISTILL_THREADS")) {
    long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<unsigned>(cap) < hw) hw = static_cast<unsigned>(cap);
  }
  if (n_items < hw) hw = static_cast<unsigned>(n_items);
  return hw == 0 ? 1 : hw;
}

// Runs f(i) for i in [0, n). f must only write to its own slot.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  unsigned workers = worker_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline nlohmann::json vec_to_json(const Vec& v) {
  return nlohmann::json(v);
}

inline Vec vec_from_json(const nlohmann::json& j, std::size_t expect,
                         const std::string& name) {
  if (!j.is_array() || j.size() != expect)
    fail_format("field '" + name + "' must be an array of length " +
                std::to_string(expect));
  Vec v;
  v.reserve(expect);
  for (const auto& x : j) {
    if (!x.is_number()) fail_format("field '" + name + "' contains a non-number");
    v.push_back(x.get<double>());
  }
  return v;
}

// Matrices are stored flat in row-major order; shape comes from the record.
inline nlohmann::json mat_to_json(const Mat& m) {
  return nlohmann::json(m.flat());
}

inline Mat mat_from_json(const nlohmann::json& j, std::size_t rows,
                         std::size_t cols, const std::string& name) {
  Vec flat = vec_from_json(j, rows * cols, name);
  Mat m(rows, cols);
  m.flat() = std::move(flat);
  return m;
}

}  // namespace seqdistill
