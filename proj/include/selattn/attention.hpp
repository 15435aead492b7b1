#pragma once

#include <vector>

#include "selattn/kv_pool.hpp"
#include "selattn/selection_cache.hpp"
#include "selattn/selector.hpp"
#include "selattn/tensor.hpp"

namespace selattn {

struct EngineConfig {
  std::size_t k = 2048;          // selected-token budget
  std::size_t n_local = 512;     // most recent tokens always attended
  std::size_t n_init = 128;      // initial tokens always attended
  std::size_t chunk_size = 512;  // prefill chunk length
  double theta = 0.9;            // selection-cache similarity threshold
  std::size_t num_heads = 8;
  std::size_t num_kv_heads = 8;
  std::size_t head_dim = 64;
  std::size_t block_size = 64;  // scoring tile width
  SelectionMethod selection_method = SelectionMethod::kHeadSoftVote;

  std::size_t model_dim() const { return num_heads * head_dim; }
  std::size_t kv_dim() const { return num_kv_heads * head_dim; }
  void validate() const;
};

// Forced windows plus the selected set. merged() is the deduped ascending
// union handed to gather; selected is kept disjoint from the forced ranges
// so no token is attended twice.
struct AttentionWindows {
  IndexList forced_init;
  IndexList selected;
  IndexList forced_local;

  IndexList merged() const;
};

// Candidate positions eligible for selection: cached tokens outside the
// forced init/local windows.
IndexList selection_candidates(std::size_t cached_len, std::size_t n_init, std::size_t n_local);

AttentionWindows make_windows(std::size_t cached_len, std::size_t n_init, std::size_t n_local,
                              IndexList selected);

// Full attention over [cached ++ current] with causal masking among the
// current rows: current token i sees every cached token and current tokens
// at or before i. q is [C x (H * d_h)], k_all/v_all are
// [(N + C) x (H_kv * d_h)]. Reference implementation, clarity over speed.
Matrix sdpa_full(const Matrix& q, const Matrix& k_all, const Matrix& v_all,
                 std::size_t num_heads);

// Selective sparse attention: gathers the window union from the pool,
// appends the current chunk KV, and runs the same masked attention. With
// windows covering every cached index this reproduces sdpa_full exactly.
Matrix sparse_attend(const Matrix& q, const Matrix& k_cur, const Matrix& v_cur,
                     const PagedKvPool& pool, SequenceHandle seq,
                     const AttentionWindows& windows, std::size_t num_heads);

struct ChunkTrace {
  std::size_t chunk_begin = 0;
  std::size_t chunk_len = 0;
  IndexList selected;
};

// Chunked prefill: per chunk, select over previously appended tokens
// (forced windows excluded), attend sparsely, then append the chunk KV.
// Returns the stacked outputs, one row per input token.
Matrix prefill(const Matrix& q_full, const Matrix& k_full, const Matrix& v_full,
               const EngineConfig& cfg, PagedKvPool& pool, SequenceHandle seq,
               std::vector<ChunkTrace>* trace = nullptr);

struct DecodeStep {
  Matrix output;  // 1 x (H * d_h)
  bool cache_hit = false;
  IndexList selected;
};

// One autoregressive step: selection via the Selection Cache, sparse
// attention, then append (k_t, v_t).
DecodeStep decode_step(const Matrix& q_t, const Matrix& k_t, const Matrix& v_t,
                       const EngineConfig& cfg, PagedKvPool& pool, SequenceHandle seq,
                       SelectionCacheEntry& cache);

struct ApproxError {
  double frobenius = 0.0;
  double relative = 0.0;  // frobenius / ||o_full||
};

ApproxError approx_error(const Matrix& o_full, const Matrix& o_sparse);

// Owns the pool, sequence, and selection cache for a single stream.
class AttentionEngine {
 public:
  AttentionEngine(EngineConfig cfg, std::size_t capacity_tokens);

  Matrix prefill(const Matrix& q, const Matrix& k, const Matrix& v,
                 std::vector<ChunkTrace>* trace = nullptr);
  DecodeStep decode(const Matrix& q, const Matrix& k, const Matrix& v);

  std::size_t len() const { return pool_.logical_len(seq_); }
  const CacheStats& cache_stats() const { return cache_.stats; }
  const SelectionCacheEntry& cache_entry() const { return cache_; }
  PagedKvPool& pool() { return pool_; }
  const PagedKvPool& pool() const { return pool_; }
  SequenceHandle sequence() const { return seq_; }
  const EngineConfig& config() const { return cfg_; }

 private:
  EngineConfig cfg_;
  PagedKvPool pool_;
  SequenceHandle seq_;
  SelectionCacheEntry cache_;
};

}  // namespace selattn
