#pragma once

#include <cstddef>
#include <functional>

namespace airtp {

/// Worker count: AIRCOMP_TP_THREADS when set and positive, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, count); nested calls run inline. Work is handed
/// out dynamically, so body must write only to slot i of any shared output;
/// callers then reduce in index order, which keeps results independent of
/// the thread count.
/// If bodies throw, the exception from the lowest index is rethrown after
/// all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace airtp
