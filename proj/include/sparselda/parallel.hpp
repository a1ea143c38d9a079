#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace sparselda {

inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// Runs body(begin, end) over contiguous blocks of [0, n). Blocks are disjoint,
// so any body that writes only inside its block is deterministic regardless
// of the worker count.
template <class Body>
void parallel_for(std::uint64_t n, unsigned workers, Body&& body) {
    workers = resolve_workers(workers);
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        body(std::uint64_t{0}, n);
        return;
    }
    if (workers > n) workers = static_cast<unsigned>(n);
    const std::uint64_t base = n / workers;
    const std::uint64_t extra = n % workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::uint64_t begin = 0;
    for (unsigned w = 0; w < workers; ++w) {
        const std::uint64_t len = base + (w < extra ? 1 : 0);
        const std::uint64_t end = begin + len;
        pool.emplace_back([&body, begin, end] { body(begin, end); });
        begin = end;
    }
    for (auto& t : pool) t.join();
}

}  // namespace sparselda
