#pragma once

#include <cstdint>
#include <functional>

namespace binembed {

/// Worker count used by parallel_for. Defaults to hardware concurrency
/// clamped to [1,16]. Results of all library operations are identical for
/// any thread count: each output element is computed by exactly one task
/// with a fixed-order inner loop.
void set_num_threads(int n);
int get_num_threads();

/// Splits [0, count) into contiguous chunks and runs fn(begin, end) on the
/// worker pool. Runs inline when count or the thread setting is 1.
void parallel_for(int64_t count, const std::function<void(int64_t, int64_t)>& fn);

/// Forces single-threaded execution for its lifetime (latency benching).
class SingleThreadGuard {
  public:
    SingleThreadGuard();
    ~SingleThreadGuard();
    SingleThreadGuard(const SingleThreadGuard&) = delete;
    SingleThreadGuard& operator=(const SingleThreadGuard&) = delete;

  private:
    int saved_;
};

}  // namespace binembed
