#include "selattn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace selattn {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: inner dimensions differ (" +
                                std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
  }
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const float* arow = a.row_ptr(i);
    float* orow = out.row_ptr(i);
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < a.cols; ++t) {
        acc += static_cast<double>(arow[t]) * static_cast<double>(b(t, j));
      }
      orow[j] = static_cast<float>(acc);
    }
  }
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const float* src = m.row_ptr(i);
    float* dst = out.row_ptr(i);
    double row_max = -HUGE_VAL;
    for (std::size_t j = 0; j < m.cols; ++j) {
      row_max = std::max(row_max, static_cast<double>(src[j]));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      double e = std::exp(static_cast<double>(src[j]) - row_max);
      dst[j] = static_cast<float>(e);
      sum += e;
    }
    double inv = 1.0 / sum;
    for (std::size_t j = 0; j < m.cols; ++j) {
      dst[j] = static_cast<float>(static_cast<double>(dst[j]) * inv);
    }
  }
  return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.rows == 0) return bottom;
  if (bottom.rows == 0) return top;
  if (top.cols != bottom.cols) {
    throw std::invalid_argument("vstack: column counts differ");
  }
  Matrix out(top.rows + bottom.rows, top.cols);
  std::copy(top.data.begin(), top.data.end(), out.data.begin());
  std::copy(bottom.data.begin(), bottom.data.end(), out.data.begin() + top.data.size());
  return out;
}

namespace {

template <typename T>
IndexList topk_impl(std::span<const T> scores, std::size_t k) {
  if (scores.empty()) {
    throw std::invalid_argument("topk_indices: empty scores");
  }
  if (k == 0) {
    throw std::invalid_argument("topk_indices: k must be >= 1");
  }
  const std::size_t n = scores.size();
  const std::size_t take = std::min(k, n);
  std::vector<TokenIndex> order(n);
  std::iota(order.begin(), order.end(), TokenIndex{0});
  // larger score first, smaller index wins a tie
  auto better = [&](TokenIndex lhs, TokenIndex rhs) {
    if (scores[lhs] != scores[rhs]) return scores[lhs] > scores[rhs];
    return lhs < rhs;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                    order.end(), better);
  IndexList out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(out.begin(), out.end());
  return out;
}

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine: length mismatch");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double a = static_cast<double>(u[i]);
    double b = static_cast<double>(v[i]);
    dot += a * b;
    nu += a * a;
    nv += b * b;
  }
  if (nu == 0.0 || nv == 0.0) {
    throw std::invalid_argument("cosine: zero-norm input");
  }
  // equal-content vectors must compare as exactly 1.0
  if (dot * dot >= nu * nv) {
    return dot >= 0.0 ? 1.0 : -1.0;
  }
  return dot / std::sqrt(nu * nv);
}

}  // namespace

IndexList topk_indices(std::span<const double> scores, std::size_t k) {
  return topk_impl(scores, k);
}

IndexList topk_indices(std::span<const float> scores, std::size_t k) {
  return topk_impl(scores, k);
}

double cosine(std::span<const float> u, std::span<const float> v) {
  return cosine_impl(u, v);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  return cosine_impl(u, v);
}

std::vector<float> chunk_mean(const Matrix& q_chunk) {
  if (q_chunk.rows == 0) {
    throw std::invalid_argument("chunk_mean: empty chunk");
  }
  std::vector<double> acc(q_chunk.cols, 0.0);
  for (std::size_t i = 0; i < q_chunk.rows; ++i) {
    const float* row = q_chunk.row_ptr(i);
    for (std::size_t j = 0; j < q_chunk.cols; ++j) {
      acc[j] += static_cast<double>(row[j]);
    }
  }
  std::vector<float> mean(q_chunk.cols);
  const double inv = 1.0 / static_cast<double>(q_chunk.rows);
  for (std::size_t j = 0; j < q_chunk.cols; ++j) {
    mean[j] = static_cast<float>(acc[j] * inv);
  }
  return mean;
}

bool strictly_ascending(const IndexList& idx) {
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (idx[i] <= idx[i - 1]) return false;
  }
  return true;
}

IndexList merge_dedup(std::initializer_list<const IndexList*> lists) {
  IndexList out;
  std::size_t total = 0;
  for (const IndexList* l : lists) total += l->size();
  out.reserve(total);
  for (const IndexList* l : lists) out.insert(out.end(), l->begin(), l->end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t intersection_size(const IndexList& a, const IndexList& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

}  // namespace selattn
