#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "selattn/attention.hpp"
#include "selattn/lemma.hpp"
#include "selattn/selection_cache.hpp"
#include "selattn/selector.hpp"
#include "selattn/tensor.hpp"
#include "selattn/workload.hpp"

namespace py = pybind11;
using namespace selattn;

namespace {

Matrix matrix_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D float32 array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
  return m;
}

py::array_t<float> array_from_matrix(const Matrix& m) {
  py::array_t<float> a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

std::vector<double> vec_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

EngineConfig config_from_kwargs(std::size_t k, std::size_t n_local, std::size_t n_init,
                                std::size_t chunk_size, double theta, std::size_t num_heads,
                                std::size_t num_kv_heads, std::size_t head_dim,
                                std::size_t block_size, const std::string& selection_method) {
  EngineConfig cfg;
  cfg.k = k;
  cfg.n_local = n_local;
  cfg.n_init = n_init;
  cfg.chunk_size = chunk_size;
  cfg.theta = theta;
  cfg.num_heads = num_heads;
  cfg.num_kv_heads = num_kv_heads;
  cfg.head_dim = head_dim;
  cfg.block_size = block_size;
  cfg.selection_method = parse_selection_method(selection_method);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(selattn, m) {
  m.doc() = "token-level selective sparse attention engine";

  m.def(
      "softmax_rows",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
        return array_from_matrix(softmax_rows(matrix_from_array(a)));
      },
      py::arg("m"));

  m.def(
      "matmul",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
        return array_from_matrix(matmul(matrix_from_array(a), matrix_from_array(b)));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "topk_indices",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores,
         std::size_t k) {
        std::vector<double> s = vec_from_array(scores);
        return topk_indices(std::span<const double>(s), k);
      },
      py::arg("scores"), py::arg("k"));

  m.def(
      "cosine",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
        std::vector<double> a = vec_from_array(u);
        std::vector<double> b = vec_from_array(v);
        return cosine(std::span<const double>(a), std::span<const double>(b));
      },
      py::arg("u"), py::arg("v"));

  m.def(
      "chunk_mean",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& chunk) {
        std::vector<float> mean = chunk_mean(matrix_from_array(chunk));
        py::array_t<float> out(mean.size());
        std::copy(mean.begin(), mean.end(), out.mutable_data());
        return out;
      },
      py::arg("q_chunk"));

  m.def(
      "sdpa_full",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& q,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& k,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& v,
         std::size_t num_heads) {
        return array_from_matrix(
            sdpa_full(matrix_from_array(q), matrix_from_array(k), matrix_from_array(v),
                      num_heads));
      },
      py::arg("q"), py::arg("k_all"), py::arg("v_all"), py::arg("num_heads"));

  m.def(
      "lemma_threshold",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& q1,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& keys,
         std::size_t k) {
        return lemma_threshold(LemmaInstance::build(vec_from_array(q1), matrix_from_array(keys), k));
      },
      py::arg("q1"), py::arg("keys"), py::arg("k"));

  m.def("overlap_rate", &overlap_rate, py::arg("i1"), py::arg("i2"));

  py::class_<PagedKvPool>(m, "PagedKvPool")
      .def(py::init<std::size_t, std::size_t, std::size_t, std::size_t>(),
           py::arg("capacity_tokens"), py::arg("page_size"), py::arg("num_kv_heads"),
           py::arg("head_dim"))
      .def("create_sequence", [](PagedKvPool& p) { return p.create_sequence().seq_id; })
      .def(
          "append_kv",
          [](PagedKvPool& p, std::uint32_t seq,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& k,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& v) {
            return p.append_kv(SequenceHandle{seq}, matrix_from_array(k), matrix_from_array(v));
          },
          py::arg("seq"), py::arg("k_new"), py::arg("v_new"))
      .def(
          "gather",
          [](const PagedKvPool& p, std::uint32_t seq, const IndexList& idx) {
            auto [k, v] = p.gather(SequenceHandle{seq}, idx);
            return py::make_tuple(array_from_matrix(k), array_from_matrix(v));
          },
          py::arg("seq"), py::arg("idx"))
      .def("release", [](PagedKvPool& p, std::uint32_t seq) { p.release(SequenceHandle{seq}); })
      .def("logical_len",
           [](const PagedKvPool& p, std::uint32_t seq) { return p.logical_len(SequenceHandle{seq}); })
      .def("shuffle_free_frames", &PagedKvPool::shuffle_free_frames, py::arg("seed"))
      .def("page_table_json",
           [](const PagedKvPool& p, std::uint32_t seq) {
             return p.page_table_json(SequenceHandle{seq});
           })
      .def_property_readonly("total_frames", &PagedKvPool::total_frames)
      .def_property_readonly("free_frames", &PagedKvPool::free_frames);

  m.def(
      "score_paged",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& q,
         const PagedKvPool& pool, std::uint32_t seq, const IndexList& candidates,
         std::size_t block_size) {
        CriticalityScores s =
            score_paged(matrix_from_array(q), pool, SequenceHandle{seq}, candidates, block_size);
        return py::make_tuple(array_from_matrix(s.per_head), s.candidate_idx);
      },
      py::arg("q"), py::arg("pool"), py::arg("seq"), py::arg("candidates"),
      py::arg("block_size") = 64);

  m.def(
      "select",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& per_head,
         const IndexList& candidate_idx, std::size_t k, const std::string& method) {
        CriticalityScores s;
        s.per_head = matrix_from_array(per_head);
        s.candidate_idx = candidate_idx;
        if (s.candidate_idx.size() != s.per_head.cols) {
          throw std::invalid_argument("candidate_idx length must match score columns");
        }
        SelectionResult r = select_with(s, k, parse_selection_method(method));
        return py::make_tuple(r.selected, r.criticality);
      },
      py::arg("per_head"), py::arg("candidate_idx"), py::arg("k"),
      py::arg("method") = "head_soft_vote");

  py::class_<AttentionEngine>(m, "Engine")
      .def(py::init([](std::size_t capacity_tokens, std::size_t k, std::size_t n_local,
                       std::size_t n_init, std::size_t chunk_size, double theta,
                       std::size_t num_heads, std::size_t num_kv_heads, std::size_t head_dim,
                       std::size_t block_size, const std::string& selection_method) {
             return AttentionEngine(
                 config_from_kwargs(k, n_local, n_init, chunk_size, theta, num_heads,
                                    num_kv_heads, head_dim, block_size, selection_method),
                 capacity_tokens);
           }),
           py::arg("capacity_tokens"), py::arg("k") = 2048, py::arg("n_local") = 512,
           py::arg("n_init") = 128, py::arg("chunk_size") = 512, py::arg("theta") = 0.9,
           py::arg("num_heads") = 8, py::arg("num_kv_heads") = 8, py::arg("head_dim") = 64,
           py::arg("block_size") = 64, py::arg("selection_method") = "head_soft_vote")
      .def(
          "prefill",
          [](AttentionEngine& e,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& q,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& k,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& v) {
            return array_from_matrix(
                e.prefill(matrix_from_array(q), matrix_from_array(k), matrix_from_array(v)));
          },
          py::arg("q"), py::arg("k"), py::arg("v"))
      .def(
          "decode",
          [](AttentionEngine& e,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& q,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& k,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& v) {
            DecodeStep step =
                e.decode(matrix_from_array(q), matrix_from_array(k), matrix_from_array(v));
            return py::make_tuple(array_from_matrix(step.output), step.cache_hit, step.selected);
          },
          py::arg("q"), py::arg("k"), py::arg("v"))
      .def("__len__", &AttentionEngine::len)
      .def_property_readonly("cache_lookups",
                             [](const AttentionEngine& e) { return e.cache_stats().lookups; })
      .def_property_readonly("cache_hits",
                             [](const AttentionEngine& e) { return e.cache_stats().hits; });

  m.attr("__version__") = "0.1.0";
}
