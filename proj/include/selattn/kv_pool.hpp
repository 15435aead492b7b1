#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "selattn/tensor.hpp"

namespace selattn {

// Thrown when the fixed-capacity frame slab cannot satisfy an allocation.
struct capacity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SequenceHandle {
  std::uint32_t seq_id = 0;
};

// Token-level paged KV storage. Each sequence is logically contiguous but
// lives in non-contiguous fixed-size page frames (page_size tokens per
// frame, 1 by default). K and V occupy separate slabs addressed by one
// shared page table, so physical placement is unobservable through the API:
// any permutation of the free list yields bit-identical gather and scoring
// results.
//
// Concurrency contract: one writer per sequence (append/release); reads
// (gather, key_row/value_row) may run concurrently against a sequence that
// is not being mutated. The pool itself takes no locks.
class PagedKvPool {
 public:
  PagedKvPool(std::size_t capacity_tokens, std::size_t page_size,
              std::size_t num_kv_heads, std::size_t head_dim);

  SequenceHandle create_sequence();

  // Appends t tokens of K/V rows shaped [t x (H_kv * d_h)]; returns the
  // logical range [first, first + t). Appends everything or throws
  // capacity_error leaving the pool untouched.
  std::pair<std::size_t, std::size_t> append_kv(SequenceHandle seq, const Matrix& k_new,
                                                const Matrix& v_new);

  // Row j of each output is the cached K/V at logical index idx[j]; input
  // order is preserved. Out-of-range indices throw, naming the index.
  std::pair<Matrix, Matrix> gather(SequenceHandle seq, const IndexList& idx) const;

  // Returns every frame of the sequence to the free list. Releasing an
  // unknown or already-released handle throws.
  void release(SequenceHandle seq);

  std::size_t logical_len(SequenceHandle seq) const;

  // Direct row access for scoring kernels; each row is H_kv * d_h floats.
  const float* key_row(SequenceHandle seq, TokenIndex pos) const;
  const float* value_row(SequenceHandle seq, TokenIndex pos) const;

  std::size_t page_size() const { return page_size_; }
  std::size_t num_kv_heads() const { return num_kv_heads_; }
  std::size_t head_dim() const { return head_dim_; }
  std::size_t row_width() const { return row_width_; }
  std::size_t total_frames() const { return total_frames_; }
  std::size_t free_frames() const { return free_list_.size(); }

  // Permutes the free list so later allocations land on different physical
  // frames. Debug/test hook for layout-invariance checks.
  void shuffle_free_frames(std::uint64_t seed);

  // Debug dump: {"seq_id": ..., "logical_len": ..., "frames": [...]}.
  std::string page_table_json(SequenceHandle seq) const;

 private:
  struct SeqState {
    std::vector<std::uint32_t> frames;
    std::size_t len = 0;
  };

  const SeqState& state(SequenceHandle seq) const;
  SeqState& state(SequenceHandle seq);
  std::size_t slab_offset(const SeqState& s, TokenIndex pos) const;

  std::size_t page_size_;
  std::size_t num_kv_heads_;
  std::size_t head_dim_;
  std::size_t row_width_;  // num_kv_heads * head_dim
  std::size_t total_frames_;

  std::vector<float> k_slab_;
  std::vector<float> v_slab_;
  std::vector<std::uint32_t> free_list_;
  std::unordered_map<std::uint32_t, SeqState> seqs_;
  std::uint32_t next_id_ = 0;
};

}  // namespace selattn
