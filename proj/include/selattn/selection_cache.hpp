#pragma once

#include <functional>
#include <string>
#include <utility>

#include "selattn/selector.hpp"

namespace selattn {

struct CacheStats {
  std::size_t lookups = 0;
  std::size_t hits = 0;
};

// hits / lookups; throws when no lookups were recorded.
double hit_rate(const CacheStats& stats);

// Memo of the last selection for one decode stream. The cached result is
// reused while the incoming query stays cosine-similar (>= theta) to the
// query that produced it; anything below theta, or the very first lookup,
// re-runs the selector and overwrites the entry.
struct SelectionCacheEntry {
  std::vector<float> cached_query;  // flattened H x d_h
  SelectionResult cached_result;
  bool first_flag = true;
  double theta = 0.9;
  CacheStats stats;
};

using SelectorFn = std::function<SelectionResult(const Matrix& q, std::size_t k)>;

// Returns the selection plus whether it came from the cache. The query must
// be non-zero (the cosine test is undefined otherwise).
std::pair<SelectionResult, bool> lookup_or_select(const Matrix& q, SelectionCacheEntry& entry,
                                                  std::size_t k, const SelectorFn& selector_fn);

// {"theta": ..., "lookups": ..., "hits": ..., "hit_rate": ...}
std::string cache_stats_json(const SelectionCacheEntry& entry);

}  // namespace selattn
