#include "vtunet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace vtunet {

namespace {

std::size_t threads_from_env() {
    const char* env = std::getenv("VTUNET_THREADS");
    if (env == nullptr) return 1;
    try {
        const long v = std::stol(env);
        return v > 0 ? static_cast<std::size_t>(v) : 1;
    } catch (...) {
        return 1;
    }
}

std::atomic<std::size_t>& thread_setting() {
    static std::atomic<std::size_t> n{threads_from_env()};
    return n;
}

}  // namespace

std::size_t num_threads() { return thread_setting().load(); }

void set_num_threads(std::size_t n) { thread_setting().store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk) {
    const std::size_t workers = std::min(num_threads(), (n + min_chunk - 1) / std::max<std::size_t>(1, min_chunk));
    if (workers <= 1) {
        if (n > 0) body(0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back([&body, b, e] { body(b, e); });
    }
    body(0, std::min(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace vtunet
