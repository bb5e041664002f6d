#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace bloomjoin {

// Fixed set of worker threads executing one barrier-synchronized stage at a
// time. parallel_for returns only after every index has been processed; the
// first exception thrown by a task is rethrown on the calling thread.
class WorkerPool {
public:
    explicit WorkerPool(std::size_t threads);
    ~WorkerPool();

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    std::size_t size() const noexcept { return workers_.size() + 1; }

    void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task);

private:
    void worker_loop();
    void drain();

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* task_ = nullptr;
    std::size_t count_ = 0;
    std::size_t next_ = 0;
    std::size_t active_ = 0;
    std::size_t generation_ = 0;
    bool stopping_ = false;
    std::exception_ptr error_;
};

// Worker count from an explicit request, else BLOOMJOIN_THREADS, else the
// hardware concurrency (at least 1).
std::size_t resolve_thread_count(std::size_t requested);

}  // namespace bloomjoin
