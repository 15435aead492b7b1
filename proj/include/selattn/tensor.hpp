#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace selattn {

using TokenIndex = std::uint32_t;

// Logical token positions. Selection sets and window lists keep these
// strictly ascending; gather tolerates arbitrary order and preserves it.
using IndexList = std::vector<TokenIndex>;

// Dense row-major fp32 matrix. Storage is 32-bit; every dot product and
// softmax sum accumulates in 64-bit.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  float* row_ptr(std::size_t r) { return data.data() + r * cols; }
  const float* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  std::span<const float> row(std::size_t r) const { return {row_ptr(r), cols}; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

// a [m x d] * b [d x n] -> [m x n]; throws std::invalid_argument on a
// dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with row-max subtraction; each output row sums to 1.
Matrix softmax_rows(const Matrix& m);

// Stacks two matrices with equal column counts; either may be empty.
Matrix vstack(const Matrix& top, const Matrix& bottom);

// Indices of the k largest scores, ties broken by the smaller index, result
// sorted ascending. Returns min(k, N) indices; throws on empty scores or
// k == 0.
IndexList topk_indices(std::span<const double> scores, std::size_t k);
IndexList topk_indices(std::span<const float> scores, std::size_t k);

// u.v / (|u||v|), clamped to [-1, 1]; throws on zero-norm input.
double cosine(std::span<const float> u, std::span<const float> v);
double cosine(std::span<const double> u, std::span<const double> v);

// Arithmetic mean of the rows of a [c x d] chunk; throws on an empty chunk.
std::vector<float> chunk_mean(const Matrix& q_chunk);

bool strictly_ascending(const IndexList& idx);

// Deduped ascending union of several index lists.
IndexList merge_dedup(std::initializer_list<const IndexList*> lists);

// |a ∩ b| for ascending lists.
std::size_t intersection_size(const IndexList& a, const IndexList& b);

}  // namespace selattn
