#include "unicornn/threads.hpp"

#include <cstdlib>
#include <string>
#include <thread>

namespace unicornn {

int resolve_threads(int requested) {
  if (requested >= 1) return requested;
  if (const char* env = std::getenv("UNICORNN_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
      // fall through to the default on malformed values
    }
  }
  return 1;
}

std::vector<std::pair<Index, Index>> shard_ranges(Index n, int threads) {
  require(n >= 0, "shard_ranges: negative item count");
  const Index t = std::max<Index>(1, std::min<Index>(threads, std::max<Index>(n, 1)));
  std::vector<std::pair<Index, Index>> out;
  out.reserve(static_cast<size_t>(t));
  const Index base = n / t;
  const Index extra = n % t;
  Index begin = 0;
  for (Index s = 0; s < t; ++s) {
    const Index len = base + (s < extra ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

void parallel_shards(Index n, int threads,
                     const std::function<void(int, Index, Index)>& fn) {
  const auto ranges = shard_ranges(n, threads);
  if (ranges.size() == 1) {
    fn(0, ranges[0].first, ranges[0].second);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(ranges.size() - 1);
  for (size_t s = 1; s < ranges.size(); ++s)
    pool.emplace_back(fn, static_cast<int>(s), ranges[s].first,
                      ranges[s].second);
  fn(0, ranges[0].first, ranges[0].second);
  for (std::thread& th : pool) th.join();
}

}  // namespace unicornn
