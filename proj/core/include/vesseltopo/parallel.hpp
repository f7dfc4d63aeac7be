#pragma once

#include <cstddef>
#include <functional>

namespace vtopo {

/// Worker count used by internal loops: VESSELTOPO_THREADS when set to a
/// positive integer, otherwise std::thread::hardware_concurrency().
[[nodiscard]] unsigned worker_count();

/// Override for worker_count(); 0 restores the environment/default value.
void set_worker_count(unsigned n);

/// Runs body(i) for i in [0, n) over contiguous chunks. Each index is handled by
/// exactly one worker, so results are independent of the thread count as long
/// as body(i) only writes state owned by i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace vtopo
