#include "selattn/kv_pool.hpp"

#include <algorithm>
#include <cstring>

#include <json.hpp>

#include "selattn/rng.hpp"

namespace selattn {

PagedKvPool::PagedKvPool(std::size_t capacity_tokens, std::size_t page_size,
                         std::size_t num_kv_heads, std::size_t head_dim)
    : page_size_(page_size),
      num_kv_heads_(num_kv_heads),
      head_dim_(head_dim),
      row_width_(num_kv_heads * head_dim) {
  if (page_size_ == 0) throw std::invalid_argument("PagedKvPool: page_size must be >= 1");
  if (row_width_ == 0) throw std::invalid_argument("PagedKvPool: zero row width");
  total_frames_ = (capacity_tokens + page_size_ - 1) / page_size_;
  k_slab_.assign(total_frames_ * page_size_ * row_width_, 0.0f);
  v_slab_.assign(total_frames_ * page_size_ * row_width_, 0.0f);
  free_list_.resize(total_frames_);
  // highest frame handed out first; the order is an allocator detail
  for (std::size_t i = 0; i < total_frames_; ++i) {
    free_list_[i] = static_cast<std::uint32_t>(i);
  }
}

SequenceHandle PagedKvPool::create_sequence() {
  SequenceHandle h{next_id_++};
  seqs_.emplace(h.seq_id, SeqState{});
  return h;
}

const PagedKvPool::SeqState& PagedKvPool::state(SequenceHandle seq) const {
  auto it = seqs_.find(seq.seq_id);
  if (it == seqs_.end()) {
    throw std::invalid_argument("PagedKvPool: unknown or released sequence " +
                                std::to_string(seq.seq_id));
  }
  return it->second;
}

PagedKvPool::SeqState& PagedKvPool::state(SequenceHandle seq) {
  return const_cast<SeqState&>(static_cast<const PagedKvPool*>(this)->state(seq));
}

std::size_t PagedKvPool::slab_offset(const SeqState& s, TokenIndex pos) const {
  const std::size_t frame = s.frames[pos / page_size_];
  const std::size_t slot = pos % page_size_;
  return (frame * page_size_ + slot) * row_width_;
}

std::pair<std::size_t, std::size_t> PagedKvPool::append_kv(SequenceHandle seq,
                                                           const Matrix& k_new,
                                                           const Matrix& v_new) {
  SeqState& s = state(seq);
  if (k_new.cols != row_width_ || v_new.cols != row_width_ || k_new.rows != v_new.rows) {
    throw std::invalid_argument("append_kv: rows must be [t x (H_kv * d_h)]");
  }
  const std::size_t t = k_new.rows;
  const std::size_t first = s.len;
  if (t == 0) return {first, first};

  const std::size_t frames_now = (s.len + page_size_ - 1) / page_size_;
  const std::size_t frames_after = (s.len + t + page_size_ - 1) / page_size_;
  const std::size_t need = frames_after - frames_now;
  if (need > free_list_.size()) {
    throw capacity_error("append_kv: pool exhausted (need " + std::to_string(need) +
                         " frames, " + std::to_string(free_list_.size()) + " free)");
  }
  for (std::size_t i = 0; i < need; ++i) {
    s.frames.push_back(free_list_.back());
    free_list_.pop_back();
  }
  for (std::size_t r = 0; r < t; ++r) {
    const TokenIndex pos = static_cast<TokenIndex>(s.len + r);
    const std::size_t off = slab_offset(s, pos);
    std::memcpy(k_slab_.data() + off, k_new.row_ptr(r), row_width_ * sizeof(float));
    std::memcpy(v_slab_.data() + off, v_new.row_ptr(r), row_width_ * sizeof(float));
  }
  s.len += t;
  return {first, first + t};
}

std::pair<Matrix, Matrix> PagedKvPool::gather(SequenceHandle seq, const IndexList& idx) const {
  const SeqState& s = state(seq);
  Matrix k_out(idx.size(), row_width_);
  Matrix v_out(idx.size(), row_width_);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= s.len) {
      throw std::out_of_range("gather: index " + std::to_string(idx[j]) +
                              " out of range (logical_len " + std::to_string(s.len) + ")");
    }
    const std::size_t off = slab_offset(s, idx[j]);
    std::memcpy(k_out.row_ptr(j), k_slab_.data() + off, row_width_ * sizeof(float));
    std::memcpy(v_out.row_ptr(j), v_slab_.data() + off, row_width_ * sizeof(float));
  }
  return {std::move(k_out), std::move(v_out)};
}

void PagedKvPool::release(SequenceHandle seq) {
  auto it = seqs_.find(seq.seq_id);
  if (it == seqs_.end()) {
    throw std::invalid_argument("release: unknown or already released sequence " +
                                std::to_string(seq.seq_id));
  }
  for (std::uint32_t f : it->second.frames) free_list_.push_back(f);
  seqs_.erase(it);
}

std::size_t PagedKvPool::logical_len(SequenceHandle seq) const { return state(seq).len; }

const float* PagedKvPool::key_row(SequenceHandle seq, TokenIndex pos) const {
  const SeqState& s = state(seq);
  if (pos >= s.len) {
    throw std::out_of_range("key_row: index " + std::to_string(pos) +
                            " out of range (logical_len " + std::to_string(s.len) + ")");
  }
  return k_slab_.data() + slab_offset(s, pos);
}

const float* PagedKvPool::value_row(SequenceHandle seq, TokenIndex pos) const {
  const SeqState& s = state(seq);
  if (pos >= s.len) {
    throw std::out_of_range("value_row: index " + std::to_string(pos) +
                            " out of range (logical_len " + std::to_string(s.len) + ")");
  }
  return v_slab_.data() + slab_offset(s, pos);
}

void PagedKvPool::shuffle_free_frames(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = free_list_.size(); i > 1; --i) {
    std::swap(free_list_[i - 1], free_list_[rng.index(i)]);
  }
}

std::string PagedKvPool::page_table_json(SequenceHandle seq) const {
  const SeqState& s = state(seq);
  nlohmann::json j;
  j["seq_id"] = seq.seq_id;
  j["logical_len"] = s.len;
  j["frames"] = s.frames;
  return j.dump();
}

}  // namespace selattn
