#pragma once

#include <functional>

namespace pmd {

/// Runs fn(i) for i in [begin, end) split across up to `jobs` threads
/// (jobs <= 0 selects hardware concurrency). fn must only write state owned
/// by its own index; results are independent of the thread count.
void parallel_for(int begin, int end, int jobs, const std::function<void(int)>& fn);

int effective_jobs(int jobs);

} // namespace pmd
