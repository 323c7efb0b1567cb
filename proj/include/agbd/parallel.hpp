#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace agbd {

// Worker count resolution: an explicit request wins over the hardware
// default, and the AGBD_VALIDATE_THREADS environment variable caps the
// result either way.
inline unsigned resolve_threads(unsigned requested = 0) {
    unsigned n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("AGBD_VALIDATE_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap > 0)
            n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return std::max(1u, n);
}

// Chunked parallel loop over [0, n). Chunk boundaries depend only on n and
// grain, never on the worker count, so callers that write results into
// per-index or per-chunk slots get schedule-independent output. fn receives
// (begin, end) of one chunk. The first worker exception is rethrown after
// all workers join.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t grain, unsigned workers, Fn&& fn) {
    if (n == 0) return;
    grain = std::max<std::size_t>(1, grain);
    const std::size_t n_chunks = (n + grain - 1) / grain;
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_chunks)));

    if (workers == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            fn(c * grain, std::min(n, (c + 1) * grain));
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                fn(c * grain, std::min(n, (c + 1) * grain));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace agbd
