#include "selattn/selection_cache.hpp"

#include <stdexcept>

#include <json.hpp>

namespace selattn {

double hit_rate(const CacheStats& stats) {
  if (stats.lookups == 0) {
    throw std::invalid_argument("hit_rate: no lookups recorded");
  }
  return static_cast<double>(stats.hits) / static_cast<double>(stats.lookups);
}

std::pair<SelectionResult, bool> lookup_or_select(const Matrix& q, SelectionCacheEntry& entry,
                                                  std::size_t k, const SelectorFn& selector_fn) {
  bool all_zero = true;
  for (float x : q.data) {
    if (x != 0.0f) {
      all_zero = false;
      break;
    }
  }
  if (q.data.empty() || all_zero) {
    throw std::invalid_argument("lookup_or_select: zero query vector");
  }

  entry.stats.lookups += 1;
  bool miss = entry.first_flag;
  if (!miss) {
    std::span<const float> current(q.data.data(), q.data.size());
    std::span<const float> cached(entry.cached_query.data(), entry.cached_query.size());
    miss = cosine(current, cached) < entry.theta;
  }
  if (miss) {
    entry.cached_result = selector_fn(q, k);
    entry.cached_query = q.data;
    entry.first_flag = false;
    return {entry.cached_result, false};
  }
  entry.stats.hits += 1;
  return {entry.cached_result, true};
}

std::string cache_stats_json(const SelectionCacheEntry& entry) {
  nlohmann::json j;
  j["theta"] = entry.theta;
  j["lookups"] = entry.stats.lookups;
  j["hits"] = entry.stats.hits;
  j["hit_rate"] = entry.stats.lookups == 0 ? 0.0 : hit_rate(entry.stats);
  return j.dump();
}

}  // namespace selattn
