#ifndef MFMP_PARALLEL_HPP
#define MFMP_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace mfmp {

// Runs fn(lo, hi) over fixed 2048-element chunks and returns the per-chunk
// results in index order. Chunk boundaries do not depend on the worker
// count, so reductions combine in a fixed order and results are identical
// for any --workers value.
template <typename T, typename Fn>
std::vector<T> parallel_chunks(int n, int workers, Fn&& fn) {
    constexpr int chunk = 2048;
    const int nchunks = (n + chunk - 1) / chunk;
    std::vector<T> out(static_cast<std::size_t>(nchunks));
    if (workers <= 1 || nchunks <= 1) {
        for (int c = 0; c < nchunks; ++c)
            out[static_cast<std::size_t>(c)] = fn(c * chunk, std::min(n, (c + 1) * chunk));
        return out;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    auto work = [&] {
        for (;;) {
            int c = next.fetch_add(1);
            if (c >= nchunks) return;
            out[static_cast<std::size_t>(c)] = fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    int nthreads = std::min(workers, nchunks);
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int w = 0; w < nthreads; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    return out;
}

} // namespace mfmp

#endif
