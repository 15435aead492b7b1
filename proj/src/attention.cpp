#include "selattn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace selattn {

void EngineConfig::validate() const {
  if (num_heads == 0 || num_kv_heads == 0 || head_dim == 0) {
    throw std::invalid_argument("EngineConfig: head counts and head_dim must be >= 1");
  }
  if (num_heads % num_kv_heads != 0) {
    throw std::invalid_argument("EngineConfig: num_heads must be a multiple of num_kv_heads");
  }
  if (chunk_size == 0) throw std::invalid_argument("EngineConfig: chunk_size must be >= 1");
  if (block_size == 0) throw std::invalid_argument("EngineConfig: block_size must be >= 1");
}

IndexList AttentionWindows::merged() const {
  return merge_dedup({&forced_init, &selected, &forced_local});
}

IndexList selection_candidates(std::size_t cached_len, std::size_t n_init, std::size_t n_local) {
  IndexList out;
  if (cached_len <= n_init + n_local) return out;
  const std::size_t begin = n_init;
  const std::size_t end = cached_len - n_local;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(static_cast<TokenIndex>(i));
  return out;
}

AttentionWindows make_windows(std::size_t cached_len, std::size_t n_init, std::size_t n_local,
                              IndexList selected) {
  AttentionWindows w;
  const std::size_t init_end = std::min(n_init, cached_len);
  w.forced_init.reserve(init_end);
  for (std::size_t i = 0; i < init_end; ++i) w.forced_init.push_back(static_cast<TokenIndex>(i));
  const std::size_t local_begin = cached_len - std::min(n_local, cached_len);
  w.forced_local.reserve(cached_len - local_begin);
  for (std::size_t i = std::max(local_begin, init_end); i < cached_len; ++i) {
    w.forced_local.push_back(static_cast<TokenIndex>(i));
  }
  // keep the three lists disjoint
  w.selected.reserve(selected.size());
  for (TokenIndex t : selected) {
    if (t >= init_end && (t < local_begin || t >= cached_len)) w.selected.push_back(t);
  }
  return w;
}

Matrix sdpa_full(const Matrix& q, const Matrix& k_all, const Matrix& v_all,
                 std::size_t num_heads) {
  if (num_heads == 0 || q.cols == 0 || q.cols % num_heads != 0) {
    throw std::invalid_argument("sdpa_full: q must be [C x (H * d_h)]");
  }
  const std::size_t head_dim = q.cols / num_heads;
  if (!k_all.same_shape(v_all) || k_all.cols == 0 || k_all.cols % head_dim != 0) {
    throw std::invalid_argument("sdpa_full: K/V must be [(N + C) x (H_kv * d_h)]");
  }
  const std::size_t num_kv_heads = k_all.cols / head_dim;
  if (num_heads % num_kv_heads != 0) {
    throw std::invalid_argument("sdpa_full: H must be a multiple of H_kv");
  }
  if (k_all.rows < q.rows) {
    throw std::invalid_argument("sdpa_full: fewer KV rows than query rows");
  }
  const std::size_t num_current = q.rows;
  const std::size_t num_cached = k_all.rows - num_current;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix out(num_current, q.cols);
  std::vector<double> logits(k_all.rows);
  std::vector<double> acc(head_dim);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t h_kv = h % num_kv_heads;
    const std::size_t kv_off = h_kv * head_dim;
    const std::size_t q_off = h * head_dim;
    for (std::size_t i = 0; i < num_current; ++i) {
      const float* q_row = q.row_ptr(i) + q_off;
      const std::size_t attended = num_cached + i + 1;  // causal within current tokens
      double max_logit = -HUGE_VAL;
      for (std::size_t j = 0; j < attended; ++j) {
        const float* k_row = k_all.row_ptr(j) + kv_off;
        double dot = 0.0;
        for (std::size_t d = 0; d < head_dim; ++d) {
          dot += static_cast<double>(q_row[d]) * static_cast<double>(k_row[d]);
        }
        logits[j] = dot * scale;
        max_logit = std::max(max_logit, logits[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < attended; ++j) {
        logits[j] = std::exp(logits[j] - max_logit);
        denom += logits[j];
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t j = 0; j < attended; ++j) {
        const double w = logits[j] / denom;
        const float* v_row = v_all.row_ptr(j) + kv_off;
        for (std::size_t d = 0; d < head_dim; ++d) {
          acc[d] += w * static_cast<double>(v_row[d]);
        }
      }
      float* o_row = out.row_ptr(i) + q_off;
      for (std::size_t d = 0; d < head_dim; ++d) o_row[d] = static_cast<float>(acc[d]);
    }
  }
  return out;
}

Matrix sparse_attend(const Matrix& q, const Matrix& k_cur, const Matrix& v_cur,
                     const PagedKvPool& pool, SequenceHandle seq,
                     const AttentionWindows& windows, std::size_t num_heads) {
  if (k_cur.rows != q.rows || v_cur.rows != q.rows) {
    throw std::invalid_argument("sparse_attend: current KV rows must match query rows");
  }
  IndexList attended = windows.merged();
  auto [k_sel, v_sel] = pool.gather(seq, attended);
  return sdpa_full(q, vstack(k_sel, k_cur), vstack(v_sel, v_cur), num_heads);
}

namespace {

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols);
  std::copy(m.row_ptr(begin), m.row_ptr(begin) + count * m.cols, out.data.begin());
  return out;
}

}  // namespace

Matrix prefill(const Matrix& q_full, const Matrix& k_full, const Matrix& v_full,
               const EngineConfig& cfg, PagedKvPool& pool, SequenceHandle seq,
               std::vector<ChunkTrace>* trace) {
  cfg.validate();
  if (q_full.rows == 0) throw std::invalid_argument("prefill: empty input");
  if (q_full.cols != cfg.model_dim() || k_full.cols != cfg.kv_dim() ||
      !k_full.same_shape(v_full) || k_full.rows != q_full.rows) {
    throw std::invalid_argument("prefill: inconsistent input shapes");
  }

  Matrix out(q_full.rows, q_full.cols);
  for (std::size_t begin = 0; begin < q_full.rows; begin += cfg.chunk_size) {
    const std::size_t len = std::min(cfg.chunk_size, q_full.rows - begin);
    Matrix q_chunk = slice_rows(q_full, begin, len);
    Matrix k_chunk = slice_rows(k_full, begin, len);
    Matrix v_chunk = slice_rows(v_full, begin, len);

    const std::size_t cached = pool.logical_len(seq);
    SelectionResult sel;
    if (cfg.k > 0) {
      IndexList candidates = selection_candidates(cached, cfg.n_init, cfg.n_local);
      if (!candidates.empty()) {
        sel = select_for_chunk(q_chunk, pool, seq, candidates, cfg.k, cfg.selection_method,
                               cfg.block_size);
      }
    }
    if (trace != nullptr) {
      trace->push_back(ChunkTrace{begin, len, sel.selected});
    }
    AttentionWindows windows = make_windows(cached, cfg.n_init, cfg.n_local, sel.selected);
    Matrix o_chunk = sparse_attend(q_chunk, k_chunk, v_chunk, pool, seq, windows, cfg.num_heads);
    std::copy(o_chunk.data.begin(), o_chunk.data.end(), out.row_ptr(begin));
    pool.append_kv(seq, k_chunk, v_chunk);
  }
  return out;
}

DecodeStep decode_step(const Matrix& q_t, const Matrix& k_t, const Matrix& v_t,
                       const EngineConfig& cfg, PagedKvPool& pool, SequenceHandle seq,
                       SelectionCacheEntry& cache) {
  cfg.validate();
  if (q_t.rows != 1 || q_t.cols != cfg.model_dim()) {
    throw std::invalid_argument("decode_step: q must be [1 x (H * d_h)]");
  }
  if (k_t.rows != 1 || k_t.cols != cfg.kv_dim() || !k_t.same_shape(v_t)) {
    throw std::invalid_argument("decode_step: KV must be [1 x (H_kv * d_h)]");
  }

  const std::size_t cached = pool.logical_len(seq);
  DecodeStep step;
  SelectionResult sel;
  if (cfg.k > 0 && cached > cfg.n_init + cfg.n_local) {
    auto selector_fn = [&](const Matrix& q, std::size_t k) {
      IndexList candidates = selection_candidates(cached, cfg.n_init, cfg.n_local);
      return select_for_chunk(q, pool, seq, candidates, k, cfg.selection_method, cfg.block_size);
    };
    auto [result, hit] = lookup_or_select(q_t, cache, cfg.k, selector_fn);
    sel = std::move(result);
    step.cache_hit = hit;
  }
  step.selected = sel.selected;
  AttentionWindows windows = make_windows(cached, cfg.n_init, cfg.n_local, sel.selected);
  step.output = sparse_attend(q_t, k_t, v_t, pool, seq, windows, cfg.num_heads);
  pool.append_kv(seq, k_t, v_t);
  return step;
}

ApproxError approx_error(const Matrix& o_full, const Matrix& o_sparse) {
  if (!o_full.same_shape(o_sparse)) {
    throw std::invalid_argument("approx_error: shape mismatch");
  }
  double diff_sq = 0.0, full_sq = 0.0;
  for (std::size_t i = 0; i < o_full.data.size(); ++i) {
    const double d = static_cast<double>(o_full.data[i]) - static_cast<double>(o_sparse.data[i]);
    diff_sq += d * d;
    full_sq += static_cast<double>(o_full.data[i]) * static_cast<double>(o_full.data[i]);
  }
  ApproxError err;
  err.frobenius = std::sqrt(diff_sq);
  err.relative = err.frobenius == 0.0 ? 0.0 : err.frobenius / std::sqrt(full_sq);
  return err;
}

AttentionEngine::AttentionEngine(EngineConfig cfg, std::size_t capacity_tokens)
    : cfg_(cfg), pool_(capacity_tokens, 1, cfg.num_kv_heads, cfg.head_dim) {
  cfg_.validate();
  seq_ = pool_.create_sequence();
  cache_.theta = cfg_.theta;
}

Matrix AttentionEngine::prefill(const Matrix& q, const Matrix& k, const Matrix& v,
                                std::vector<ChunkTrace>* trace) {
  return selattn::prefill(q, k, v, cfg_, pool_, seq_, trace);
}

DecodeStep AttentionEngine::decode(const Matrix& q, const Matrix& k, const Matrix& v) {
  return decode_step(q, k, v, cfg_, pool_, seq_, cache_);
}

}  // namespace selattn
