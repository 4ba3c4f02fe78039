#pragma once

#include <functional>
#include <vector>

#include "unicornn/common.hpp"

namespace unicornn {

// Worker count: explicit request wins, then the UNICORNN_THREADS environment
// variable, then 1. Always at least 1.
int resolve_threads(int requested);

// Contiguous [begin, end) shards of n items for t workers; never empty.
std::vector<std::pair<Index, Index>> shard_ranges(Index n, int threads);

// Runs fn(shard_index, begin, end) on every shard, shards 2..t on their own
// threads. Callers reduce their per-shard results in shard order afterwards,
// which keeps any floating-point reduction deterministic for a fixed thread
// count.
void parallel_shards(Index n, int threads,
                     const std::function<void(int, Index, Index)>& fn);

}  // namespace unicornn
