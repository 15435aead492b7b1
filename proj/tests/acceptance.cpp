// Acceptance suite: every release-gating property of the engine, one
// pass/fail line each. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "selattn/attention.hpp"
#include "selattn/lemma.hpp"
#include "selattn/rng.hpp"
#include "selattn/selector.hpp"
#include "selattn/workload.hpp"

using namespace selattn;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %d. %s (%s)\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  if (!pass) ++failures;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (float& x : m.data) x = static_cast<float>(rng.normal());
  return m;
}

template <typename Fn>
std::uint64_t time_ns(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

// 1. select-all sparse attention reproduces full attention over a shape grid
void criterion_select_all_equivalence() {
  Rng rng(1001);
  const std::size_t num_heads = 4, num_kv_heads = 2, head_dim = 32;
  double worst = 0.0;
  for (std::size_t c : {std::size_t{1}, std::size_t{7}, std::size_t{512}}) {
    for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{1000}}) {
      PagedKvPool pool(n + 1, 1, num_kv_heads, head_dim);
      SequenceHandle seq = pool.create_sequence();
      Matrix k_cache = random_matrix(n, num_kv_heads * head_dim, rng);
      Matrix v_cache = random_matrix(n, num_kv_heads * head_dim, rng);
      pool.append_kv(seq, k_cache, v_cache);

      Matrix q = random_matrix(c, num_heads * head_dim, rng);
      Matrix k_cur = random_matrix(c, num_kv_heads * head_dim, rng);
      Matrix v_cur = random_matrix(c, num_kv_heads * head_dim, rng);

      AttentionWindows windows;
      windows.selected.resize(n);
      std::iota(windows.selected.begin(), windows.selected.end(), TokenIndex{0});
      Matrix sparse = sparse_attend(q, k_cur, v_cur, pool, seq, windows, num_heads);
      Matrix full = sdpa_full(q, vstack(k_cache, k_cur), vstack(v_cache, v_cur), num_heads);
      worst = std::max(worst, approx_error(full, sparse).relative);
    }
  }
  report(1, "select-all windows reproduce full attention (C x N grid)", worst <= 1e-5,
         "max rel frobenius " + std::to_string(worst) + ", tol 1e-5");
}

// 2. the cosine bound guarantees identical top-k sets
void criterion_lemma_soundness() {
  LemmaCheckParams params;
  params.trials = 10000;
  params.dim = 64;
  params.num_keys = 256;
  params.k = 16;
  params.seed = 1002;
  LemmaCheckResult r = run_lemma_check(params);
  report(2, "top-k stability bound holds in 10^4 randomized trials", r.violations == 0,
         "violations " + std::to_string(r.violations) + " / " + std::to_string(r.trials) +
             ", below-threshold matches " + std::to_string(r.below_matches) + " / " +
             std::to_string(r.below_trials));
}

// 3. scoring is bit-identical across physical layouts and block sizes
void criterion_layout_tiling_invariance() {
  Rng rng(1003);
  std::size_t checked = 0;
  bool ok = true;
  for (int pool_id = 0; pool_id < 100 && ok; ++pool_id) {
    const std::size_t n = 16 + rng.index(120);
    const std::size_t num_kv_heads = 1 + rng.index(3);
    const std::size_t group = 1 + rng.index(3);
    const std::size_t num_heads = num_kv_heads * group;
    const std::size_t head_dim = 8 + 8 * rng.index(3);

    Matrix k_rows = random_matrix(n, num_kv_heads * head_dim, rng);
    Matrix v_rows = random_matrix(n, num_kv_heads * head_dim, rng);
    Matrix q = random_matrix(num_heads, head_dim, rng);
    IndexList candidates;
    for (TokenIndex t = 0; t < n; ++t) {
      if (rng.uniform() < 0.7) candidates.push_back(t);
    }
    if (candidates.empty()) candidates.push_back(0);

    std::vector<float> reference;
    for (int layout = 0; layout < 3 && ok; ++layout) {
      PagedKvPool pool(n, 1, num_kv_heads, head_dim);
      if (layout > 0) pool.shuffle_free_frames(rng.next_u64());
      SequenceHandle seq = pool.create_sequence();
      pool.append_kv(seq, k_rows, v_rows);
      for (std::size_t block : {std::size_t{1}, std::size_t{7}, std::size_t{64},
                                candidates.size()}) {
        CriticalityScores s = score_paged(q, pool, seq, candidates, block);
        if (reference.empty()) {
          reference = s.per_head.data;
        } else if (s.per_head.data != reference) {
          ok = false;
        }
        ++checked;
      }
    }
  }
  report(3, "score_paged is bit-identical across layouts and block sizes", ok,
         std::to_string(checked) + " layout/block combinations checked");
}

// 4. finer selection granularity never loses recall on scattered needles
void criterion_granularity_recall() {
  GranularityConfig cfg;
  cfg.budget = 1024;
  cfg.block_sizes = {1, 8, 32, 128};
  const std::size_t seeds = 100;
  std::size_t monotone = 0, token_beats_coarse = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    RecallWorkload w = make_scattered_workload(16384, 64, 64, 6.0, 2000 + s);
    ExperimentReport r = run_recall_experiment(cfg, w);
    std::vector<double> recalls = r.column("recall");
    bool mono = true;
    for (std::size_t i = 1; i < recalls.size(); ++i) {
      if (recalls[i] > recalls[i - 1] + 1e-12) mono = false;
    }
    if (mono) ++monotone;
    if (recalls.front() > recalls.back()) ++token_beats_coarse;
  }
  const bool pass = monotone == seeds && token_beats_coarse >= 95;
  report(4, "recall is monotone in granularity; token level beats 128-blocks", pass,
         "monotone " + std::to_string(monotone) + "/100, token>block128 " +
             std::to_string(token_beats_coarse) + "/100 (need 100 and >=95)");
}

// 5. head soft vote resists loud heads and conserves per-head mass
void criterion_soft_vote_robustness() {
  Matrix per_head(2, 4);
  per_head(0, 0) = 5.0f;
  per_head(0, 1) = 4.5f;
  per_head(1, 2) = 500.0f;
  per_head(1, 3) = 480.0f;
  CriticalityScores scores;
  scores.per_head = per_head;
  scores.candidate_idx = {0, 1, 2, 3};

  IndexList raw = select_topk(scores, 2).selected;
  IndexList soft = select_head_soft_vote(scores, 2).selected;
  const bool raw_misses =
      !std::binary_search(raw.begin(), raw.end(), TokenIndex{0});
  const bool soft_selects =
      std::binary_search(soft.begin(), soft.end(), TokenIndex{0});

  Rng rng(1005);
  bool mass_ok = true;
  double worst_mass_err = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t heads = 1 + rng.index(8);
    const std::size_t tokens = 1 + rng.index(64);
    Matrix m = random_matrix(heads, tokens, rng);
    for (float& x : m.data) x *= 50.0f;  // include large-logit regimes
    CriticalityScores s;
    s.per_head = m;
    s.candidate_idx.resize(tokens);
    std::iota(s.candidate_idx.begin(), s.candidate_idx.end(), TokenIndex{0});
    SelectionResult r = select_head_soft_vote(s, tokens);
    double mass = 0.0;
    for (double c : r.criticality) mass += c;
    const double err = std::abs(mass - static_cast<double>(heads));
    worst_mass_err = std::max(worst_mass_err, err / static_cast<double>(heads));
    if (err > 1e-5 * static_cast<double>(heads)) mass_ok = false;
  }
  report(5, "soft vote keeps the moderate-margin token and unit head mass",
         raw_misses && soft_selects && mass_ok,
         std::string("raw-sum misses token 0: ") + (raw_misses ? "yes" : "no") +
             ", soft vote selects it: " + (soft_selects ? "yes" : "no") +
             ", worst mass err " + std::to_string(worst_mass_err));
}

// 6. overlap grows with query similarity
void criterion_overlap_similarity() {
  const std::size_t runs = 100;
  std::size_t ordered = 0;
  for (std::size_t r = 0; r < runs; ++r) {
    OverlapParams p;
    p.num_pairs = 1000;
    p.seed = 3000 + r;
    ExperimentReport rep = run_overlap_experiment(p);
    const auto& bottom = rep.rows.front();  // [0.0, 0.1)
    const auto& top = rep.rows.back();      // [0.9, 1.0]
    if (bottom[2] > 0 && top[2] > 0 && top[4] > bottom[4]) ++ordered;
  }
  report(6, "top-k overlap in the [0.9,1) bin exceeds the [0,0.1) bin", ordered >= 99,
         std::to_string(ordered) + "/100 runs ordered (need >= 99)");
}

// 7. selection cache: hit rate non-increasing in theta, first lookup misses,
//    identical streams hit at (n-1)/n
void criterion_selection_cache() {
  const std::vector<double> theta_grid{0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0};
  EngineConfig cfg;
  cfg.k = 64;
  cfg.n_init = 32;
  cfg.n_local = 64;
  cfg.num_heads = 2;
  cfg.num_kv_heads = 2;
  cfg.head_dim = 16;
  cfg.block_size = 32;
  const std::size_t n = 1024;
  const std::size_t steps = 64;

  Rng rng(1007);
  Matrix k_cache = random_matrix(n, cfg.kv_dim(), rng);
  Matrix v_cache = random_matrix(n, cfg.kv_dim(), rng);

  std::vector<QueryStreamSpec> streams;
  for (double sim : {0.9, 0.98}) {
    QueryStreamSpec s;
    s.kind = StreamKind::kRotating;
    s.similarity = sim;
    s.steps = steps;
    s.dim = cfg.model_dim();
    s.seed = rng.next_u64();
    streams.push_back(s);
  }
  {
    QueryStreamSpec s;
    s.kind = StreamKind::kIdentical;
    s.steps = steps;
    s.dim = cfg.model_dim();
    s.seed = rng.next_u64();
    streams.push_back(s);
  }
  {
    QueryStreamSpec s;
    s.kind = StreamKind::kAlternating;
    s.steps = steps;
    s.dim = cfg.model_dim();
    s.seed = rng.next_u64();
    streams.push_back(s);
  }

  bool monotone_ok = true, first_miss_ok = true, identical_ok = true;
  std::string detail;
  for (const QueryStreamSpec& stream_spec : streams) {
    std::vector<Matrix> queries = generate_query_stream(stream_spec);
    std::size_t prev_hits = steps + 1;
    for (double theta : theta_grid) {
      EngineConfig run_cfg = cfg;
      run_cfg.theta = theta;
      PagedKvPool pool(n + steps + 2, 1, cfg.num_kv_heads, cfg.head_dim);
      SequenceHandle seq = pool.create_sequence();
      pool.append_kv(seq, k_cache, v_cache);
      SelectionCacheEntry cache;
      cache.theta = theta;
      bool first = true;
      for (std::size_t t = 0; t < steps; ++t) {
        Matrix k_t = random_matrix(1, cfg.kv_dim(), rng);
        Matrix v_t = random_matrix(1, cfg.kv_dim(), rng);
        DecodeStep step = decode_step(queries[t], k_t, v_t, run_cfg, pool, seq, cache);
        if (first && step.cache_hit) first_miss_ok = false;
        first = false;
      }
      if (cache.stats.hits > prev_hits) {
        monotone_ok = false;
        detail += std::string(stream_kind_name(stream_spec.kind)) + "@" +
                  std::to_string(theta) + " inverted; ";
      }
      prev_hits = cache.stats.hits;
      if (stream_spec.kind == StreamKind::kIdentical) {
        const double want = static_cast<double>(steps - 1) / static_cast<double>(steps);
        if (std::abs(hit_rate(cache.stats) - want) > 1e-12) identical_ok = false;
      }
    }
  }
  report(7, "cache hit rate is non-increasing in theta; identical streams hit (n-1)/n",
         monotone_ok && first_miss_ok && identical_ok,
         detail.empty() ? "4 streams x 8 thetas, first lookup always missed" : detail);
}

// 8. decode error vs full attention shrinks as the budget grows
void criterion_budget_error_monotone() {
  EngineConfig cfg;
  cfg.n_init = 128;
  cfg.n_local = 512;
  cfg.num_heads = 2;
  cfg.num_kv_heads = 2;
  cfg.head_dim = 32;
  cfg.block_size = 64;
  const std::size_t n = 4096;
  const std::vector<std::size_t> budgets{128, 256, 512, 1024, 2048};
  const std::size_t seeds = 20;

  std::vector<double> mean_err(budgets.size(), 0.0);
  for (std::size_t s = 0; s < seeds; ++s) {
    WorkloadSpec spec;
    spec.n_tokens = n;
    spec.n_heads = cfg.num_heads;
    spec.n_kv_heads = cfg.num_kv_heads;
    spec.head_dim = cfg.head_dim;
    spec.needle_positions = evenly_spaced_positions(n, 8, cfg.n_init, cfg.n_local);
    spec.needle_strength = 1.0;
    spec.seed = 4000 + s;
    Workload w = generate_workload(spec);

    Matrix o_full;
    {
      PagedKvPool pool(n + 2, 1, cfg.num_kv_heads, cfg.head_dim);
      SequenceHandle seq = pool.create_sequence();
      pool.append_kv(seq, w.k_cache, w.v_cache);
      IndexList all(n);
      std::iota(all.begin(), all.end(), TokenIndex{0});
      auto [k_all, v_all] = pool.gather(seq, all);
      o_full = sdpa_full(w.probe_q, vstack(k_all, w.probe_k), vstack(v_all, w.probe_v),
                         cfg.num_heads);
    }
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      EngineConfig run_cfg = cfg;
      run_cfg.k = budgets[b];
      PagedKvPool pool(n + 2, 1, cfg.num_kv_heads, cfg.head_dim);
      SequenceHandle seq = pool.create_sequence();
      pool.append_kv(seq, w.k_cache, w.v_cache);
      SelectionCacheEntry cache;
      DecodeStep step = decode_step(w.probe_q, w.probe_k, w.probe_v, run_cfg, pool, seq, cache);
      mean_err[b] += approx_error(o_full, step.output).relative / static_cast<double>(seeds);
    }
  }
  std::size_t inversions = 0;
  std::string series;
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    if (b > 0 && mean_err[b] > mean_err[b - 1]) ++inversions;
    series += std::to_string(mean_err[b]) + (b + 1 < budgets.size() ? " " : "");
  }
  report(8, "mean decode error is non-increasing in the budget (<=1 inversion)",
         inversions <= 1, "mean rel err by k: " + series);
}

// 9. desk-scale decode speedup at N = 65536
void criterion_decode_speedup() {
  EngineConfig cfg;  // defaults: k=2048, n_local=512, n_init=128, H=8, H_kv=8, d_h=64
  const std::size_t n = 65536;
  const std::size_t warmups = 2, repeats = 5;

  WorkloadSpec spec;
  spec.n_tokens = n;
  spec.n_heads = cfg.num_heads;
  spec.n_kv_heads = cfg.num_kv_heads;
  spec.head_dim = cfg.head_dim;
  spec.needle_positions = evenly_spaced_positions(n, 8, cfg.n_init, cfg.n_local);
  spec.needle_strength = 8.0;
  spec.seed = 1009;
  Workload w = generate_workload(spec);

  PagedKvPool pool(n + warmups + repeats + 2, 1, cfg.num_kv_heads, cfg.head_dim);
  SequenceHandle seq = pool.create_sequence();
  pool.append_kv(seq, w.k_cache, w.v_cache);

  IndexList all(n);
  std::iota(all.begin(), all.end(), TokenIndex{0});
  std::vector<std::uint64_t> full_ns;
  for (std::size_t r = 0; r < warmups + repeats; ++r) {
    const std::uint64_t ns = time_ns([&] {
      auto [k_all, v_all] = pool.gather(seq, all);
      Matrix out = sdpa_full(w.probe_q, vstack(k_all, w.probe_k), vstack(v_all, w.probe_v),
                             cfg.num_heads);
      (void)out;
    });
    if (r >= warmups) full_ns.push_back(ns);
  }

  SelectionCacheEntry cache;
  cache.theta = cfg.theta;
  std::vector<std::uint64_t> sel_ns;
  for (std::size_t r = 0; r < warmups + repeats; ++r) {
    const std::uint64_t ns = time_ns([&] {
      DecodeStep step = decode_step(w.probe_q, w.probe_k, w.probe_v, cfg, pool, seq, cache);
      (void)step;
    });
    if (r >= warmups) sel_ns.push_back(ns);
  }

  std::sort(full_ns.begin(), full_ns.end());
  std::sort(sel_ns.begin(), sel_ns.end());
  const double full_med = static_cast<double>(full_ns[full_ns.size() / 2]);
  const double sel_med = static_cast<double>(sel_ns[sel_ns.size() / 2]);
  const double speedup = full_med / sel_med;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "full %.2f ms, selective %.2f ms, speedup %.1fx (need >= 5x)",
                full_med / 1e6, sel_med / 1e6, speedup);
  report(9, "steady-state selective decode is >= 5x faster than full SDPA at 64K",
         speedup >= 5.0, detail);
}

}  // namespace

int main() {
  criterion_select_all_equivalence();
  criterion_lemma_soundness();
  criterion_layout_tiling_invariance();
  criterion_granularity_recall();
  criterion_soft_vote_robustness();
  criterion_overlap_similarity();
  criterion_selection_cache();
  criterion_budget_error_monotone();
  criterion_decode_speedup();
  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria failed\n", failures);
  }
  return failures;
}
