#include "pmd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace pmd {

int effective_jobs(int jobs) {
    if (jobs > 0)
        return jobs;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int begin, int end, int jobs, const std::function<void(int)>& fn) {
    const int n = end - begin;
    if (n <= 0)
        return;
    const int workers = std::min(effective_jobs(jobs), n);
    if (workers == 1) {
        for (int i = begin; i < end; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next(begin);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    auto body = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= end)
                return;
            fn(i);
        }
    };
    for (int t = 0; t < workers; ++t)
        pool.emplace_back(body);
    for (auto& t : pool)
        t.join();
}

} // namespace pmd
