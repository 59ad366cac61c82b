// l2prof/work_queue.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace l2prof {

struct TaskOutcome {
  bool ok = false;
  int attempts = 0;
  std::string error;
};

/// Runs fn(item, worker) for every item on at most `jobs` threads. A
/// throwing item is retried up to `max_retries` more times on the same
/// worker; the last error is kept. Worker ids are dense in [0, jobs), so
/// callers can give each worker its own non-reentrant handles.
inline std::vector<TaskOutcome> run_bounded(
    std::size_t num_items, std::size_t jobs, int max_retries,
    const std::function<void(std::size_t, std::size_t)>& fn) {
  std::vector<TaskOutcome> outcomes(num_items);
  jobs = std::max<std::size_t>(1, std::min(jobs, num_items));
  std::atomic<std::size_t> next{0};
  auto worker = [&](std::size_t w) {
    for (std::size_t i = next++; i < num_items; i = next++) {
      auto& out = outcomes[i];
      while (!out.ok && out.attempts <= max_retries) {
        ++out.attempts;
        try {
          fn(i, w);
          out.ok = true;
          out.error.clear();
        } catch (const std::exception& e) {
          out.error = e.what();
        }
      }
    }
  };
  if (jobs == 1) {
    worker(0);
    return outcomes;
  }
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
  }
  return outcomes;
}

}  // namespace l2prof
