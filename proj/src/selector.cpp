#include "selattn/selector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace selattn {

SelectionMethod parse_selection_method(std::string_view name) {
  if (name == "topk") return SelectionMethod::kTopK;
  if (name == "head_vote") return SelectionMethod::kHeadVote;
  if (name == "head_soft_vote") return SelectionMethod::kHeadSoftVote;
  throw std::invalid_argument("unknown selection method: " + std::string(name));
}

std::string_view selection_method_name(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::kTopK: return "topk";
    case SelectionMethod::kHeadVote: return "head_vote";
    case SelectionMethod::kHeadSoftVote: return "head_soft_vote";
  }
  return "";
}

CriticalityScores score_paged(const Matrix& q, const PagedKvPool& pool, SequenceHandle seq,
                              const IndexList& candidates, std::size_t block_size) {
  const std::size_t num_heads = q.rows;
  const std::size_t head_dim = q.cols;
  const std::size_t num_kv_heads = pool.num_kv_heads();
  if (head_dim != pool.head_dim()) {
    throw std::invalid_argument("score_paged: query head_dim " + std::to_string(head_dim) +
                                " does not match pool head_dim " +
                                std::to_string(pool.head_dim()));
  }
  if (num_heads == 0 || num_heads % num_kv_heads != 0) {
    throw std::invalid_argument("score_paged: H must be a positive multiple of H_kv");
  }
  if (block_size == 0) {
    throw std::invalid_argument("score_paged: block_size must be >= 1");
  }

  const std::size_t num_tokens = candidates.size();
  CriticalityScores scores;
  scores.candidate_idx = candidates;
  scores.per_head = Matrix(num_heads, num_tokens);

  const std::size_t num_blocks = num_tokens == 0 ? 0 : (num_tokens + block_size - 1) / block_size;
  for (std::size_t h = 0; h < num_heads; ++h) {
    const float* q_head = q.row_ptr(h);
    const std::size_t h_kv = h % num_kv_heads;
    const std::size_t kv_off = h_kv * head_dim;
    float* s_row = scores.per_head.row_ptr(h);
    for (std::size_t b = 0; b < num_blocks; ++b) {
      const std::size_t t0 = b * block_size;
      const std::size_t len = std::min(block_size, num_tokens - t0);
      for (std::size_t j = 0; j < len; ++j) {
        const float* key = pool.key_row(seq, candidates[t0 + j]) + kv_off;
        double acc = 0.0;
        for (std::size_t d = 0; d < head_dim; ++d) {
          acc += static_cast<double>(q_head[d]) * static_cast<double>(key[d]);
        }
        s_row[t0 + j] = static_cast<float>(acc);
      }
    }
  }
  return scores;
}

namespace {

SelectionResult pick(const CriticalityScores& scores, const std::vector<double>& criticality,
                     std::size_t k) {
  SelectionResult result;
  if (criticality.empty()) return result;
  IndexList cols = topk_indices(std::span<const double>(criticality), k);
  result.selected.reserve(cols.size());
  result.criticality.reserve(cols.size());
  for (TokenIndex j : cols) {
    result.selected.push_back(scores.candidate_idx[j]);
    result.criticality.push_back(criticality[j]);
  }
  // candidate_idx ascending implies selected ascending already
  return result;
}

}  // namespace

SelectionResult select_topk(const CriticalityScores& scores, std::size_t k) {
  const std::size_t num_tokens = scores.per_head.cols;
  std::vector<double> criticality(num_tokens, 0.0);
  for (std::size_t h = 0; h < scores.per_head.rows; ++h) {
    const float* row = scores.per_head.row_ptr(h);
    for (std::size_t j = 0; j < num_tokens; ++j) {
      criticality[j] += static_cast<double>(row[j]);
    }
  }
  return pick(scores, criticality, k);
}

SelectionResult select_head_vote(const CriticalityScores& scores, std::size_t k) {
  const std::size_t num_tokens = scores.per_head.cols;
  std::vector<double> votes(num_tokens, 0.0);
  if (num_tokens > 0) {
    for (std::size_t h = 0; h < scores.per_head.rows; ++h) {
      IndexList head_top = topk_indices(scores.per_head.row(h), k);
      for (TokenIndex j : head_top) votes[j] += 1.0;
    }
  }
  return pick(scores, votes, k);
}

SelectionResult select_head_soft_vote(const CriticalityScores& scores, std::size_t k) {
  const std::size_t num_tokens = scores.per_head.cols;
  std::vector<double> criticality(num_tokens, 0.0);
  if (num_tokens > 0) {
    Matrix normalized = softmax_rows(scores.per_head);
    for (std::size_t h = 0; h < normalized.rows; ++h) {
      const float* row = normalized.row_ptr(h);
      for (std::size_t j = 0; j < num_tokens; ++j) {
        criticality[j] += static_cast<double>(row[j]);
      }
    }
  }
  return pick(scores, criticality, k);
}

SelectionResult select_with(const CriticalityScores& scores, std::size_t k, SelectionMethod m) {
  switch (m) {
    case SelectionMethod::kTopK: return select_topk(scores, k);
    case SelectionMethod::kHeadVote: return select_head_vote(scores, k);
    case SelectionMethod::kHeadSoftVote: return select_head_soft_vote(scores, k);
  }
  throw std::invalid_argument("select_with: bad method");
}

SelectionResult select_for_chunk(const Matrix& q_chunk, const PagedKvPool& pool,
                                 SequenceHandle seq, const IndexList& candidates, std::size_t k,
                                 SelectionMethod method, std::size_t block_size) {
  const std::size_t head_dim = pool.head_dim();
  if (q_chunk.cols == 0 || q_chunk.cols % head_dim != 0) {
    throw std::invalid_argument("select_for_chunk: chunk width must be H * d_h");
  }
  const std::size_t num_heads = q_chunk.cols / head_dim;
  std::vector<float> mean = chunk_mean(q_chunk);
  Matrix q_heads(num_heads, head_dim);
  std::copy(mean.begin(), mean.end(), q_heads.data.begin());
  CriticalityScores scores = score_paged(q_heads, pool, seq, candidates, block_size);
  return select_with(scores, k, method);
}

}  // namespace selattn
