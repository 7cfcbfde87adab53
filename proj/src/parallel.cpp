#include "binembed/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace binembed {

namespace {

int default_threads() {
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 16u));
}

int g_num_threads = default_threads();

// Nested parallel_for calls (e.g. graph forward inside a per-clip job) run
// inline on the calling worker.
thread_local bool t_in_worker = false;

// Persistent pool. Workers sleep on a condition variable between jobs and
// claim contiguous chunks through an atomic cursor. Which chunk an index
// lands in never affects results, so scheduling is free to vary.
class Pool {
  public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void run(int64_t count, int workers, const std::function<void(int64_t, int64_t)>& fn) {
        const int helpers = workers - 1;
        ensure_workers(helpers);
        {
            std::lock_guard<std::mutex> lk(m_);
            count_ = count;
            fn_ = &fn;
            chunk_ = std::max<int64_t>(1, count / (int64_t{workers} * 4));
            cursor_.store(0, std::memory_order_relaxed);
            pending_ = helpers;
            running_ = helpers;
            ++generation_;
        }
        cv_.notify_all();
        drain();
        std::unique_lock<std::mutex> lk(m_);
        done_cv_.wait(lk, [&] { return running_ == 0; });
        fn_ = nullptr;
    }

  private:
    void ensure_workers(int n) {
        std::lock_guard<std::mutex> lk(m_);
        while (static_cast<int>(threads_.size()) < n)
            threads_.emplace_back([this] { worker_loop(); });
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(m_);
            cv_.wait(lk, [&] { return stop_ || (generation_ != seen && pending_ > 0); });
            if (stop_) return;
            seen = generation_;
            --pending_;
            lk.unlock();
            drain();
            {
                std::lock_guard<std::mutex> lk2(m_);
                if (--running_ == 0) done_cv_.notify_one();
            }
        }
    }

    void drain() {
        const auto* fn = fn_;
        const int64_t count = count_;
        const int64_t chunk = chunk_;
        const bool was_worker = t_in_worker;
        t_in_worker = true;
        for (;;) {
            const int64_t begin = cursor_.fetch_add(chunk, std::memory_order_relaxed);
            if (begin >= count) break;
            (*fn)(begin, std::min(begin + chunk, count));
        }
        t_in_worker = was_worker;
    }

    Pool() = default;
    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    std::mutex m_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> threads_;
    const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
    int64_t count_ = 0, chunk_ = 1;
    std::atomic<int64_t> cursor_{0};
    int pending_ = 0, running_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace

void set_num_threads(int n) { g_num_threads = std::max(1, n); }
int get_num_threads() { return g_num_threads; }

void parallel_for(int64_t count, const std::function<void(int64_t, int64_t)>& fn) {
    if (count <= 0) return;
    const int workers = static_cast<int>(std::min<int64_t>(g_num_threads, count));
    if (workers <= 1 || t_in_worker) {
        fn(0, count);
        return;
    }
    Pool::instance().run(count, workers, fn);
}

SingleThreadGuard::SingleThreadGuard() : saved_(g_num_threads) { g_num_threads = 1; }
SingleThreadGuard::~SingleThreadGuard() { g_num_threads = saved_; }

}  // namespace binembed
