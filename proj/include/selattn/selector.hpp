#pragma once

#include <string_view>
#include <vector>

#include "selattn/kv_pool.hpp"
#include "selattn/tensor.hpp"

namespace selattn {

enum class SelectionMethod { kTopK, kHeadVote, kHeadSoftVote };

SelectionMethod parse_selection_method(std::string_view name);
std::string_view selection_method_name(SelectionMethod m);

// Per-head query/key dot products over a candidate set: per_head is [H x T]
// where column j scores the token at candidate_idx[j].
struct CriticalityScores {
  Matrix per_head;
  IndexList candidate_idx;
};

struct SelectionResult {
  IndexList selected;               // ascending logical indices, size = min(k, T)
  std::vector<double> criticality;  // aggregated ranking score per selected index
};

// Blocked per-head dot-product scoring over the paged pool:
// S[h][j] = q[h] . K[candidates[j], h mod H_kv]. The candidate axis is
// walked in tiles of block_size tokens; results are bit-identical for any
// block_size and any physical frame placement.
CriticalityScores score_paged(const Matrix& q, const PagedKvPool& pool, SequenceHandle seq,
                              const IndexList& candidates, std::size_t block_size);

// Rank by the raw logit sum across heads. A head with outsized logits can
// dominate this ranking; that is the failure mode the vote variants fix.
SelectionResult select_topk(const CriticalityScores& scores, std::size_t k);

// Each head casts 0/1 votes for its own top-k; rank by vote count. Ties go
// to the lower logical index.
SelectionResult select_head_vote(const CriticalityScores& scores, std::size_t k);

// Rank by the sum of per-head softmax-normalized criticality, so every head
// contributes exactly unit mass.
SelectionResult select_head_soft_vote(const CriticalityScores& scores, std::size_t k);

SelectionResult select_with(const CriticalityScores& scores, std::size_t k, SelectionMethod m);

// Chunk-wise selection: reduce the chunk to its mean query, then score and
// select. q_chunk is [c x (H * d_h)]; c = 1 degenerates to per-token
// selection.
SelectionResult select_for_chunk(const Matrix& q_chunk, const PagedKvPool& pool,
                                 SequenceHandle seq, const IndexList& candidates, std::size_t k,
                                 SelectionMethod method, std::size_t block_size);

}  // namespace selattn
