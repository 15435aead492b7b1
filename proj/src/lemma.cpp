#include "selattn/lemma.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "selattn/rng.hpp"
#include "selattn/selector.hpp"

namespace selattn {

namespace {

std::vector<double> gaussian_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (float& x : m.data) x = static_cast<float>(rng.normal());
  return m;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> key_dots(const std::vector<double>& q, const Matrix& keys) {
  std::vector<double> dots(keys.rows);
  for (std::size_t i = 0; i < keys.rows; ++i) {
    const float* row = keys.row_ptr(i);
    double acc = 0.0;
    for (std::size_t d = 0; d < keys.cols; ++d) acc += q[d] * static_cast<double>(row[d]);
    dots[i] = acc;
  }
  return dots;
}

}  // namespace

IndexList topk_by_dot(const std::vector<double>& q, const Matrix& keys, std::size_t k) {
  std::vector<double> dots = key_dots(q, keys);
  return topk_indices(std::span<const double>(dots), k);
}

LemmaInstance LemmaInstance::build(std::vector<double> q1, Matrix keys, std::size_t k) {
  if (k == 0 || k >= keys.rows) {
    throw std::invalid_argument("LemmaInstance: need 1 <= k < N");
  }
  if (q1.size() != keys.cols) {
    throw std::invalid_argument("LemmaInstance: query/key dimension mismatch");
  }
  LemmaInstance inst;
  inst.q1 = std::move(q1);
  inst.keys = std::move(keys);
  inst.k = k;
  inst.q1_norm = norm2(inst.q1);
  if (inst.q1_norm == 0.0) throw std::invalid_argument("LemmaInstance: zero query");

  std::vector<double> dots = key_dots(inst.q1, inst.keys);
  inst.topk = topk_indices(std::span<const double>(dots), k);

  std::vector<char> in_top(inst.keys.rows, 0);
  for (TokenIndex i : inst.topk) in_top[i] = 1;
  double min_selected = HUGE_VAL;
  double max_rejected = -HUGE_VAL;
  for (std::size_t i = 0; i < dots.size(); ++i) {
    if (in_top[i]) {
      min_selected = std::min(min_selected, dots[i]);
    } else {
      max_rejected = std::max(max_rejected, dots[i]);
    }
  }
  inst.eta = min_selected - max_rejected;
  if (inst.eta <= 0.0) {
    throw std::invalid_argument("LemmaInstance: top-k boundary tie (eta <= 0)");
  }
  for (std::size_t i = 0; i < inst.keys.rows; ++i) {
    double n = 0.0;
    const float* row = inst.keys.row_ptr(i);
    for (std::size_t d = 0; d < inst.keys.cols; ++d) {
      n += static_cast<double>(row[d]) * static_cast<double>(row[d]);
    }
    inst.k_max_norm = std::max(inst.k_max_norm, std::sqrt(n));
  }
  return inst;
}

double lemma_threshold(const LemmaInstance& inst) {
  if (inst.eta <= 0.0) {
    throw std::invalid_argument("lemma_threshold: eta must be positive");
  }
  if (inst.q1_norm <= 0.0 || inst.k_max_norm <= 0.0) {
    throw std::invalid_argument("lemma_threshold: degenerate instance");
  }
  const double eta_hat = inst.eta / inst.q1_norm;
  const double r = eta_hat / (2.0 * inst.k_max_norm);
  return 1.0 / std::sqrt(1.0 + r * r);
}

double overlap_rate(const IndexList& i1, const IndexList& i2) {
  if (i2.empty()) throw std::invalid_argument("overlap_rate: empty second set");
  return static_cast<double>(intersection_size(i1, i2)) / static_cast<double>(i2.size());
}

std::vector<double> make_query_at_cosine(const std::vector<double>& q, double target, Rng& rng) {
  const double qn = norm2(q);
  if (qn == 0.0) throw std::invalid_argument("make_query_at_cosine: zero query");
  if (target < -1.0 || target > 1.0) {
    throw std::invalid_argument("make_query_at_cosine: target outside [-1, 1]");
  }
  std::vector<double> unit(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) unit[i] = q[i] / qn;

  std::vector<double> perp;
  double pn = 0.0;
  do {
    perp = gaussian_vec(q.size(), rng);
    double along = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) along += perp[i] * unit[i];
    for (std::size_t i = 0; i < q.size(); ++i) perp[i] -= along * unit[i];
    pn = norm2(perp);
  } while (pn < 1e-12);

  const double sin_part = std::sqrt(std::max(0.0, 1.0 - target * target));
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = target * unit[i] + sin_part * perp[i] / pn;
  }
  return out;
}

LemmaCheckResult run_lemma_check(const LemmaCheckParams& p) {
  Rng rng(p.seed);
  LemmaCheckResult result;
  result.report.name = "lemma_check";
  result.report.columns = {"trial", "threshold", "cos_q1_q2", "above_threshold", "topk_match"};

  double threshold_sum = 0.0;
  for (std::size_t t = 0; t < p.trials; ++t) {
    LemmaInstance inst;
    // ties have probability zero under the gaussian draw; loop stays for safety
    while (true) {
      try {
        inst = LemmaInstance::build(gaussian_vec(p.dim, rng),
                                    gaussian_matrix(p.num_keys, p.dim, rng), p.k);
        break;
      } catch (const std::invalid_argument&) {
        continue;
      }
    }
    const double thr = lemma_threshold(inst);
    threshold_sum += thr;

    // sample above the bound and verify the realized cosine stayed there
    double cos_above = 0.0;
    std::vector<double> q2;
    do {
      const double target = thr + (1.0 - thr) * rng.uniform();
      q2 = make_query_at_cosine(inst.q1, target, rng);
      cos_above = cosine(std::span<const double>(inst.q1), std::span<const double>(q2));
    } while (cos_above < thr);
    const bool match_above = topk_by_dot(q2, inst.keys, p.k) == inst.topk;
    if (!match_above) result.violations += 1;
    result.report.add_row({static_cast<double>(t), thr, cos_above, 1.0, match_above ? 1.0 : 0.0});

    // one informational sample below the bound (recorded, never asserted);
    // log-spaced multiples of the gap reach far enough down to observe
    // mismatches, since the bound is loose for gaussian instances
    const double gap_mult = std::pow(10.0, 7.0 * rng.uniform());
    const double below_target = std::max(-1.0, thr - (1.0 - thr) * (1.0 + gap_mult));
    std::vector<double> q2_below = make_query_at_cosine(inst.q1, below_target, rng);
    const double cos_below =
        cosine(std::span<const double>(inst.q1), std::span<const double>(q2_below));
    if (cos_below < thr) {
      result.below_trials += 1;
      const bool match_below = topk_by_dot(q2_below, inst.keys, p.k) == inst.topk;
      if (match_below) result.below_matches += 1;
      result.report.add_row(
          {static_cast<double>(t), thr, cos_below, 0.0, match_below ? 1.0 : 0.0});
    }
  }
  result.trials = p.trials;
  result.mean_threshold = p.trials == 0 ? 0.0 : threshold_sum / static_cast<double>(p.trials);
  return result;
}

ExperimentReport run_overlap_experiment(const OverlapParams& p) {
  if (p.bin_edges.size() < 2) {
    throw std::invalid_argument("run_overlap_experiment: need at least one bin");
  }
  if (p.num_pairs == 0 || p.k == 0 || p.k > p.num_keys) {
    throw std::invalid_argument("run_overlap_experiment: bad parameters");
  }
  Rng rng(p.seed);
  Matrix keys = gaussian_matrix(p.num_keys, p.dim, rng);

  const std::size_t num_bins = p.bin_edges.size() - 1;
  std::vector<double> overlap_sum(num_bins, 0.0);
  std::vector<double> sim_sum(num_bins, 0.0);
  std::vector<std::size_t> count(num_bins, 0);

  for (std::size_t t = 0; t < p.num_pairs; ++t) {
    std::vector<double> q1 = gaussian_vec(p.dim, rng);
    const double alpha = p.alpha_min + (p.alpha_max - p.alpha_min) * rng.uniform();
    std::vector<double> q2;
    double mix_norm = 0.0;
    do {
      std::vector<double> r = gaussian_vec(p.dim, rng);
      q2.resize(p.dim);
      for (std::size_t i = 0; i < p.dim; ++i) q2[i] = alpha * q1[i] + (1.0 - alpha) * r[i];
      mix_norm = norm2(q2);
    } while (mix_norm < 1e-12);
    for (double& x : q2) x /= mix_norm;

    const double sim = cosine(std::span<const double>(q1), std::span<const double>(q2));
    IndexList i1 = topk_by_dot(q1, keys, p.k);
    IndexList i2 = topk_by_dot(q2, keys, p.k);
    const double ov = overlap_rate(i1, i2);

    if (sim < p.bin_edges.front() || sim > p.bin_edges.back()) continue;
    std::size_t bin = num_bins - 1;  // top edge closes the last bin
    for (std::size_t b = 0; b < num_bins; ++b) {
      if (sim < p.bin_edges[b + 1]) {
        bin = b;
        break;
      }
    }
    overlap_sum[bin] += ov;
    sim_sum[bin] += sim;
    count[bin] += 1;
  }

  ExperimentReport report;
  report.name = "overlap";
  report.columns = {"bin_lo", "bin_hi", "count", "mean_similarity", "mean_overlap"};
  for (std::size_t b = 0; b < num_bins; ++b) {
    const double n = static_cast<double>(count[b]);
    report.add_row({p.bin_edges[b], p.bin_edges[b + 1], n, count[b] ? sim_sum[b] / n : 0.0,
                    count[b] ? overlap_sum[b] / n : 0.0});
  }
  return report;
}

BlockScore parse_block_score(std::string_view name) {
  if (name == "mean") return BlockScore::kMean;
  if (name == "max") return BlockScore::kMax;
  if (name == "sum") return BlockScore::kSum;
  throw std::invalid_argument("unknown block score: " + std::string(name));
}

RecallWorkload make_scattered_workload(std::size_t n_tokens, std::size_t dim,
                                       std::size_t n_needles, double margin,
                                       std::uint64_t seed) {
  if (n_needles == 0 || n_needles > n_tokens) {
    throw std::invalid_argument("make_scattered_workload: bad needle count");
  }
  Rng rng(seed);
  RecallWorkload w;
  w.query = gaussian_vec(dim, rng);
  w.keys = gaussian_matrix(n_tokens, dim, rng);

  const double qn = norm2(w.query);
  std::vector<std::size_t> positions(n_needles);
  const double spacing = static_cast<double>(n_tokens) / static_cast<double>(n_needles);
  for (std::size_t i = 0; i < n_needles; ++i) {
    positions[i] = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * spacing);
  }

  std::vector<char> is_needle(n_tokens, 0);
  for (std::size_t p : positions) is_needle[p] = 1;
  std::vector<double> dots = key_dots(w.query, w.keys);
  double max_noise = -HUGE_VAL;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    if (!is_needle[i]) max_noise = std::max(max_noise, dots[i]);
  }
  for (std::size_t p : positions) {
    const double target = max_noise + margin + rng.uniform();  // jitter breaks ties
    const double scale = target / (qn * qn);
    float* row = w.keys.row_ptr(p);
    for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<float>(scale * w.query[d]);
  }
  return w;
}

ExperimentReport run_recall_experiment(const GranularityConfig& cfg, const RecallWorkload& w) {
  const std::size_t n = w.keys.rows;
  if (n == 0) throw std::invalid_argument("run_recall_experiment: empty workload");
  for (std::size_t b : cfg.block_sizes) {
    if (b == 0 || cfg.budget < b) {
      throw std::invalid_argument("run_recall_experiment: budget smaller than block size " +
                                  std::to_string(b));
    }
  }

  // token criticality = softmax attention mass under the probe query
  std::vector<double> dots = key_dots(w.query, w.keys);
  const double max_dot = *std::max_element(dots.begin(), dots.end());
  std::vector<double> mass(n);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mass[i] = std::exp(dots[i] - max_dot);
    denom += mass[i];
  }
  for (double& m : mass) m /= denom;

  // ground truth: smallest set capturing critical_mass of the attention
  std::vector<TokenIndex> order(n);
  std::iota(order.begin(), order.end(), TokenIndex{0});
  std::sort(order.begin(), order.end(), [&](TokenIndex a, TokenIndex b) {
    if (mass[a] != mass[b]) return mass[a] > mass[b];
    return a < b;
  });
  IndexList critical;
  double captured = 0.0;
  for (TokenIndex i : order) {
    critical.push_back(i);
    captured += mass[i];
    if (captured >= cfg.critical_mass) break;
  }
  std::sort(critical.begin(), critical.end());

  ExperimentReport report;
  report.name = "recall";
  report.columns = {"block_size", "blocks_selected", "critical_count", "recall"};
  for (std::size_t block : cfg.block_sizes) {
    const std::size_t num_blocks = (n + block - 1) / block;
    std::vector<double> block_scores(num_blocks, 0.0);
    for (std::size_t b = 0; b < num_blocks; ++b) {
      const std::size_t begin = b * block;
      const std::size_t end = std::min(begin + block, n);
      double acc = cfg.block_score == BlockScore::kMax ? -HUGE_VAL : 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        if (cfg.block_score == BlockScore::kMax) {
          acc = std::max(acc, mass[i]);
        } else {
          acc += mass[i];
        }
      }
      if (cfg.block_score == BlockScore::kMean) acc /= static_cast<double>(end - begin);
      block_scores[b] = acc;
    }
    const std::size_t num_selected = std::min(cfg.budget / block, num_blocks);
    IndexList top_blocks = topk_indices(std::span<const double>(block_scores), num_selected);
    IndexList selected_tokens;
    selected_tokens.reserve(num_selected * block);
    for (TokenIndex b : top_blocks) {
      const std::size_t begin = static_cast<std::size_t>(b) * block;
      const std::size_t end = std::min(begin + block, n);
      for (std::size_t i = begin; i < end; ++i) {
        selected_tokens.push_back(static_cast<TokenIndex>(i));
      }
    }
    std::sort(selected_tokens.begin(), selected_tokens.end());
    const double recall = static_cast<double>(intersection_size(selected_tokens, critical)) /
                          static_cast<double>(critical.size());
    report.add_row({static_cast<double>(block), static_cast<double>(num_selected),
                    static_cast<double>(critical.size()), recall});
  }
  return report;
}

std::vector<double> head_logit_norms(const Matrix& q, const PagedKvPool& pool,
                                     SequenceHandle seq) {
  const std::size_t len = pool.logical_len(seq);
  if (len == 0) throw std::invalid_argument("head_logit_norms: empty cache");
  IndexList all(len);
  std::iota(all.begin(), all.end(), TokenIndex{0});
  CriticalityScores scores = score_paged(q, pool, seq, all, 64);
  std::vector<double> norms(q.rows, 0.0);
  for (std::size_t h = 0; h < q.rows; ++h) {
    const float* row = scores.per_head.row_ptr(h);
    for (std::size_t j = 0; j < len; ++j) norms[h] += std::abs(static_cast<double>(row[j]));
  }
  return norms;
}

}  // namespace selattn
