#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "selattn/tensor.hpp"

namespace selattn {

struct WorkloadSpec {
  std::size_t n_tokens = 4096;
  std::size_t n_heads = 8;
  std::size_t n_kv_heads = 8;
  std::size_t head_dim = 64;
  IndexList needle_positions;     // planted token indices, ascending
  double needle_strength = 8.0;   // dot-product margin over every distractor
  // Noise keys are scaled by this factor so the attention logits spread to
  // ~logit_scale standard deviations after the 1/sqrt(d_h) scaling. Real
  // long-context attention is sharply concentrated; unit-scale gaussian
  // logits would make it near-uniform and unapproximable by any sparse
  // method, so the sparsity is induced by construction.
  double logit_scale = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Gaussian Q/K/V with planted needles. Needle keys are built against probe_q
// so that, for every query head, the needle's dot product beats every
// distractor by at least needle_strength; needle values all encode the
// payload direction, making retrieval observable in the attention output.
struct Workload {
  Matrix q_prefill;            // n_tokens x (H * d_h)
  Matrix k_cache;              // n_tokens x (H_kv * d_h)
  Matrix v_cache;              // n_tokens x (H_kv * d_h)
  Matrix probe_q;              // 1 x (H * d_h)
  Matrix probe_k;              // 1 x (H_kv * d_h)
  Matrix probe_v;              // 1 x (H_kv * d_h)
  std::vector<double> payload; // d_h unit direction stored at needle values
  IndexList ground_truth;      // needle positions
};

Workload generate_workload(const WorkloadSpec& spec);

// Evenly spread positions inside [keep_head, n_tokens - keep_tail); pass the
// forced-window sizes so every needle stays selectable.
IndexList evenly_spaced_positions(std::size_t n_tokens, std::size_t count,
                                  std::size_t keep_head, std::size_t keep_tail);

// Cosine of each head's output slice against the payload, averaged over
// heads. Retrieval diagnostics for needle workloads.
double payload_alignment(const Matrix& output_row, const std::vector<double>& payload,
                         std::size_t num_heads);

enum class StreamKind { kIdentical, kRotating, kInterpolated, kAlternating };

StreamKind parse_stream_kind(std::string_view name);
std::string_view stream_kind_name(StreamKind kind);

struct QueryStreamSpec {
  StreamKind kind = StreamKind::kRotating;
  std::size_t steps = 64;
  double similarity = 0.95;  // target consecutive cosine (rotating/interpolated)
  std::size_t dim = 512;     // flattened H * d_h
  std::uint64_t seed = 0;
};

// Unit-norm decode queries, one [1 x dim] row per step.
// - identical:    the same query every step
// - rotating:     advance by a fixed angle in a random 2-plane, so
//                 cos(q_i, q_j) = cos((j - i) * acos(similarity)) exactly
// - interpolated: spherical random walk with per-step cosine ~= similarity
// - alternating:  two orthogonal queries in turn
std::vector<Matrix> generate_query_stream(const QueryStreamSpec& spec);

}  // namespace selattn
