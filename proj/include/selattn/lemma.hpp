#pragma once

#include <cstdint>
#include <vector>

#include "selattn/kv_pool.hpp"
#include "selattn/report.hpp"
#include "selattn/tensor.hpp"

namespace selattn {

// A query/key-set instance with its top-k margin: eta is the gap between the
// weakest selected dot product and the strongest rejected one under q1. The
// top-k set must be unique (eta > 0).
struct LemmaInstance {
  std::vector<double> q1;
  Matrix keys;  // N x d
  std::size_t k = 0;
  IndexList topk;
  double eta = 0.0;
  double q1_norm = 0.0;
  double k_max_norm = 0.0;

  static LemmaInstance build(std::vector<double> q1, Matrix keys, std::size_t k);
};

// Cosine-similarity level above which a second query provably selects the
// same top-k set: 1 / sqrt(1 + (eta_hat / (2 * k_max_norm))^2) with
// eta_hat = eta / |q1|.
double lemma_threshold(const LemmaInstance& inst);

// |i1 ∩ i2| / |i2|; deliberately normalized by the second set only.
double overlap_rate(const IndexList& i1, const IndexList& i2);

// Unit vector with exact cosine `target` to q (up to rounding); direction of
// the orthogonal component is random.
std::vector<double> make_query_at_cosine(const std::vector<double>& q, double target,
                                         class Rng& rng);

IndexList topk_by_dot(const std::vector<double>& q, const Matrix& keys, std::size_t k);

struct LemmaCheckParams {
  std::size_t trials = 10000;
  std::size_t dim = 64;
  std::size_t num_keys = 256;
  std::size_t k = 16;
  std::uint64_t seed = 0;
};

struct LemmaCheckResult {
  std::size_t trials = 0;
  std::size_t violations = 0;  // cos >= threshold but top-k sets differ
  // informational: trials sampled below the threshold and whether they still
  // matched (the bound is sufficient, not necessary)
  std::size_t below_trials = 0;
  std::size_t below_matches = 0;
  double mean_threshold = 0.0;
  ExperimentReport report;
};

LemmaCheckResult run_lemma_check(const LemmaCheckParams& p);

struct OverlapParams {
  std::size_t num_pairs = 1000;
  std::size_t dim = 64;
  std::size_t num_keys = 256;
  std::size_t k = 16;
  std::vector<double> bin_edges = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double alpha_min = 0.0;
  double alpha_max = 1.0;
  std::uint64_t seed = 0;
};

// Interpolated query pairs (q2 = normalize(alpha * q1 + (1 - alpha) * r)),
// top-k overlap per pair, bucketed by realized cosine similarity. Rows:
// bin_lo, bin_hi, count, mean_overlap, mean_similarity.
ExperimentReport run_overlap_experiment(const OverlapParams& p);

enum class BlockScore { kMean, kMax, kSum };

BlockScore parse_block_score(std::string_view name);

struct GranularityConfig {
  std::size_t budget = 1024;
  std::vector<std::size_t> block_sizes = {1, 8, 32, 128};
  BlockScore block_score = BlockScore::kMean;
  // critical set = smallest token set holding at least this softmax mass
  double critical_mass = 0.9;
};

struct RecallWorkload {
  std::vector<double> query;
  Matrix keys;  // N x d
};

// Noise keys plus needle keys planted at evenly spread positions, each with
// a dot-product margin over every distractor.
RecallWorkload make_scattered_workload(std::size_t n_tokens, std::size_t dim,
                                       std::size_t n_needles, double margin, std::uint64_t seed);

// Per block size: partition tokens into contiguous blocks, score blocks from
// token criticality, keep floor(budget / B) blocks, report recall of the
// ground-truth critical set. Rows: block_size, num_blocks_selected, recall,
// critical_count.
ExperimentReport run_recall_experiment(const GranularityConfig& cfg, const RecallWorkload& w);

// Per query head h: sum over all cached tokens of |q_h . K_j|.
std::vector<double> head_logit_norms(const Matrix& q, const PagedKvPool& pool,
                                     SequenceHandle seq);

}  // namespace selattn
