#include "selattn/workload.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "selattn/rng.hpp"

namespace selattn {

namespace {

void fill_gaussian(Matrix& m, Rng& rng) {
  for (float& x : m.data) x = static_cast<float>(rng.normal());
}

double dot_f(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

}  // namespace

void WorkloadSpec::validate() const {
  if (n_tokens == 0 || n_heads == 0 || n_kv_heads == 0 || head_dim == 0) {
    throw std::invalid_argument("WorkloadSpec: all sizes must be >= 1");
  }
  if (n_heads % n_kv_heads != 0) {
    throw std::invalid_argument("WorkloadSpec: n_heads must be a multiple of n_kv_heads");
  }
  if (!(logit_scale > 0.0)) {
    throw std::invalid_argument("WorkloadSpec: logit_scale must be positive");
  }
  if (!strictly_ascending(needle_positions)) {
    throw std::invalid_argument("WorkloadSpec: needle positions must be strictly ascending");
  }
  for (TokenIndex p : needle_positions) {
    if (p >= n_tokens) {
      throw std::invalid_argument("WorkloadSpec: needle position " + std::to_string(p) +
                                  " >= n_tokens");
    }
  }
}

IndexList evenly_spaced_positions(std::size_t n_tokens, std::size_t count,
                                  std::size_t keep_head, std::size_t keep_tail) {
  if (count == 0) return {};
  if (n_tokens <= keep_head + keep_tail) {
    throw std::invalid_argument("evenly_spaced_positions: keep-out ranges cover everything");
  }
  const std::size_t span = n_tokens - keep_head - keep_tail;
  if (count > span) {
    throw std::invalid_argument("evenly_spaced_positions: too many positions");
  }
  IndexList out(count);
  const double spacing = static_cast<double>(span) / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<TokenIndex>(
        keep_head + static_cast<std::size_t>((static_cast<double>(i) + 0.5) * spacing));
  }
  return out;
}

Workload generate_workload(const WorkloadSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  Workload w;
  const std::size_t model_dim = spec.n_heads * spec.head_dim;
  const std::size_t kv_dim = spec.n_kv_heads * spec.head_dim;
  w.q_prefill = Matrix(spec.n_tokens, model_dim);
  w.k_cache = Matrix(spec.n_tokens, kv_dim);
  w.v_cache = Matrix(spec.n_tokens, kv_dim);
  w.probe_q = Matrix(1, model_dim);
  w.probe_k = Matrix(1, kv_dim);
  w.probe_v = Matrix(1, kv_dim);
  fill_gaussian(w.q_prefill, rng);
  fill_gaussian(w.k_cache, rng);
  fill_gaussian(w.v_cache, rng);
  fill_gaussian(w.probe_q, rng);
  fill_gaussian(w.probe_k, rng);
  fill_gaussian(w.probe_v, rng);
  if (spec.logit_scale != 1.0) {
    const float s = static_cast<float>(spec.logit_scale);
    for (float& x : w.k_cache.data) x *= s;
    for (float& x : w.probe_k.data) x *= s;
  }

  w.payload.resize(spec.head_dim);
  double pn = 0.0;
  for (double& x : w.payload) {
    x = rng.normal();
    pn += x * x;
  }
  pn = std::sqrt(pn);
  for (double& x : w.payload) x /= pn;

  w.ground_truth = spec.needle_positions;
  if (w.ground_truth.empty()) return w;

  std::vector<char> is_needle(spec.n_tokens, 0);
  for (TokenIndex p : w.ground_truth) is_needle[p] = 1;

  const std::size_t group = spec.n_heads / spec.n_kv_heads;
  for (std::size_t g = 0; g < spec.n_kv_heads; ++g) {
    // group direction: mean of the member query heads' unit vectors
    std::vector<double> dir(spec.head_dim, 0.0);
    for (std::size_t m = 0; m < group; ++m) {
      const std::size_t h = m * spec.n_kv_heads + g;  // heads with h mod H_kv == g
      const float* q_head = w.probe_q.row_ptr(0) + h * spec.head_dim;
      const double qn = std::sqrt(dot_f(q_head, q_head, spec.head_dim));
      for (std::size_t d = 0; d < spec.head_dim; ++d) {
        dir[d] += static_cast<double>(q_head[d]) / qn;
      }
    }
    double dn = 0.0;
    for (double x : dir) dn += x * x;
    dn = std::sqrt(dn);
    if (dn < 1e-9) {
      throw std::invalid_argument("generate_workload: degenerate probe head group");
    }
    for (double& x : dir) x /= dn;

    // strongest distractor dot and weakest projection onto dir per group
    double max_noise = -HUGE_VAL;
    double min_proj = HUGE_VAL;
    for (std::size_t m = 0; m < group; ++m) {
      const std::size_t h = m * spec.n_kv_heads + g;
      const float* q_head = w.probe_q.row_ptr(0) + h * spec.head_dim;
      for (std::size_t t = 0; t < spec.n_tokens; ++t) {
        if (is_needle[t]) continue;
        max_noise = std::max(max_noise,
                             dot_f(q_head, w.k_cache.row_ptr(t) + g * spec.head_dim,
                                   spec.head_dim));
      }
      double proj = 0.0;
      for (std::size_t d = 0; d < spec.head_dim; ++d) {
        proj += static_cast<double>(q_head[d]) * dir[d];
      }
      min_proj = std::min(min_proj, proj);
    }
    if (min_proj <= 1e-3) {
      throw std::invalid_argument(
          "generate_workload: probe heads in one KV group are too spread to plant needles");
    }

    for (std::size_t i = 0; i < w.ground_truth.size(); ++i) {
      // jitter keeps needle criticalities distinct
      const double target = max_noise + spec.needle_strength + 0.25 * rng.uniform();
      const double scale = target / min_proj;
      float* key = w.k_cache.row_ptr(w.ground_truth[i]) + g * spec.head_dim;
      float* val = w.v_cache.row_ptr(w.ground_truth[i]) + g * spec.head_dim;
      for (std::size_t d = 0; d < spec.head_dim; ++d) {
        key[d] = static_cast<float>(scale * dir[d]);
        val[d] = static_cast<float>(w.payload[d]);
      }
    }
  }
  return w;
}

double payload_alignment(const Matrix& output_row, const std::vector<double>& payload,
                         std::size_t num_heads) {
  if (output_row.rows != 1 || num_heads == 0 || output_row.cols % num_heads != 0) {
    throw std::invalid_argument("payload_alignment: output must be [1 x (H * d_h)]");
  }
  const std::size_t head_dim = output_row.cols / num_heads;
  if (payload.size() != head_dim) {
    throw std::invalid_argument("payload_alignment: payload length must equal d_h");
  }
  double mean = 0.0;
  for (std::size_t h = 0; h < num_heads; ++h) {
    const float* o = output_row.row_ptr(0) + h * head_dim;
    double dot = 0.0, on = 0.0, pn = 0.0;
    for (std::size_t d = 0; d < head_dim; ++d) {
      dot += static_cast<double>(o[d]) * payload[d];
      on += static_cast<double>(o[d]) * static_cast<double>(o[d]);
      pn += payload[d] * payload[d];
    }
    mean += dot / std::sqrt(on * pn);
  }
  return mean / static_cast<double>(num_heads);
}

StreamKind parse_stream_kind(std::string_view name) {
  if (name == "identical") return StreamKind::kIdentical;
  if (name == "rotating") return StreamKind::kRotating;
  if (name == "interpolated") return StreamKind::kInterpolated;
  if (name == "alternating") return StreamKind::kAlternating;
  throw std::invalid_argument("unknown stream kind: " + std::string(name));
}

std::string_view stream_kind_name(StreamKind kind) {
  switch (kind) {
    case StreamKind::kIdentical: return "identical";
    case StreamKind::kRotating: return "rotating";
    case StreamKind::kInterpolated: return "interpolated";
    case StreamKind::kAlternating: return "alternating";
  }
  return "";
}

std::vector<Matrix> generate_query_stream(const QueryStreamSpec& spec) {
  if (spec.dim < 2 || spec.steps == 0) {
    throw std::invalid_argument("generate_query_stream: need dim >= 2 and steps >= 1");
  }
  if (spec.similarity < -1.0 || spec.similarity > 1.0) {
    throw std::invalid_argument("generate_query_stream: similarity outside [-1, 1]");
  }
  Rng rng(spec.seed);

  auto unit_gaussian = [&](std::size_t n) {
    std::vector<double> v(n);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (double& x : v) x /= norm;
    return v;
  };
  auto orthonormal_to = [&](const std::vector<double>& u) {
    std::vector<double> v;
    double norm = 0.0;
    do {
      v = unit_gaussian(u.size());
      double along = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) along += v[i] * u[i];
      norm = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        v[i] -= along * u[i];
        norm += v[i] * v[i];
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (double& x : v) x /= norm;
    return v;
  };
  auto to_row = [&](const std::vector<double>& v) {
    Matrix m(1, spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) m.data[i] = static_cast<float>(v[i]);
    return m;
  };

  std::vector<Matrix> stream;
  stream.reserve(spec.steps);
  switch (spec.kind) {
    case StreamKind::kIdentical: {
      Matrix q = to_row(unit_gaussian(spec.dim));
      for (std::size_t t = 0; t < spec.steps; ++t) stream.push_back(q);
      break;
    }
    case StreamKind::kRotating: {
      std::vector<double> e1 = unit_gaussian(spec.dim);
      std::vector<double> e2 = orthonormal_to(e1);
      const double phi = std::acos(std::clamp(spec.similarity, -1.0, 1.0));
      for (std::size_t t = 0; t < spec.steps; ++t) {
        const double a = phi * static_cast<double>(t);
        std::vector<double> q(spec.dim);
        for (std::size_t i = 0; i < spec.dim; ++i) {
          q[i] = std::cos(a) * e1[i] + std::sin(a) * e2[i];
        }
        stream.push_back(to_row(q));
      }
      break;
    }
    case StreamKind::kInterpolated: {
      std::vector<double> q = unit_gaussian(spec.dim);
      const double c = std::clamp(spec.similarity, -1.0, 1.0);
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      for (std::size_t t = 0; t < spec.steps; ++t) {
        stream.push_back(to_row(q));
        std::vector<double> p = orthonormal_to(q);
        for (std::size_t i = 0; i < spec.dim; ++i) q[i] = c * q[i] + s * p[i];
      }
      break;
    }
    case StreamKind::kAlternating: {
      std::vector<double> a = unit_gaussian(spec.dim);
      std::vector<double> b = orthonormal_to(a);
      Matrix qa = to_row(a);
      Matrix qb = to_row(b);
      for (std::size_t t = 0; t < spec.steps; ++t) stream.push_back(t % 2 == 0 ? qa : qb);
      break;
    }
  }
  return stream;
}

}  // namespace selattn
