// Python bindings for the core operations: plain nested lists in and out,
// no framework dependency on the Python side.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cfsum/data.hpp"
#include "cfsum/metrics.hpp"
#include "cfsum/phrase_complement.hpp"
#include "cfsum/prefilter.hpp"
#include "cfsum/tensor.hpp"
#include "cfsum/word_complement.hpp"

namespace py = pybind11;
using Matrix = std::vector<std::vector<double>>;

namespace {

cfsum::Tensor to_tensor(const Matrix& m) {
  if (m.empty()) throw std::invalid_argument("empty matrix");
  const int rows = static_cast<int>(m.size());
  const int cols = static_cast<int>(m[0].size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& row : m) {
    if (static_cast<int>(row.size()) != cols)
      throw std::invalid_argument("ragged matrix");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return cfsum::Tensor::from(std::move(flat), {rows, cols});
}

Matrix to_matrix(const cfsum::Tensor& t) {
  const auto& shape = t.shape();
  const auto& d = t.data();
  Matrix out(shape[0], std::vector<double>(shape[1]));
  for (int r = 0; r < shape[0]; ++r)
    for (int c = 0; c < shape[1]; ++c) out[r][c] = d[r * shape[1] + c];
  return out;
}

}  // namespace

PYBIND11_MODULE(_cfsum, m) {
  m.doc() = "coarse-to-fine multimodal summarization core operations";

  m.def("softmax_rows", [](const Matrix& x) {
    cfsum::NoGradGuard ng;
    return to_matrix(cfsum::softmax_rows(to_tensor(x)));
  });
  m.def("cosine", [](const std::vector<double>& a, const std::vector<double>& b) {
    cfsum::NoGradGuard ng;
    auto ta = cfsum::Tensor::from(std::vector<double>(a), {1, static_cast<int>(a.size())});
    auto tb = cfsum::Tensor::from(std::vector<double>(b), {1, static_cast<int>(b.size())});
    return cfsum::cosine(ta, tb).item();
  });

  m.def("consistency", [](const Matrix& uni, const Matrix& bi, double alpha) {
    auto d = cfsum::consistency(to_tensor(uni), to_tensor(bi), alpha);
    return py::make_tuple(d.consistency, d.keep);
  });
  m.def("apply_mask", [](const Matrix& attention, int keep, int text_len) {
    cfsum::NoGradGuard ng;
    return to_matrix(cfsum::apply_mask(to_tensor(attention), keep, text_len));
  });
  m.def("image_edge_indicator", &cfsum::image_edge_indicator);

  m.def("word_gain", &cfsum::word_gain);
  m.def("copy_targets", &cfsum::copy_targets);
  m.def("phrase_truth", &cfsum::phrase_truth);
  m.def("phrase_gain", &cfsum::phrase_gain);
  m.def("project_gain", &cfsum::project_gain);
  m.def("t2v", [](const std::vector<Matrix>& attentions, int text_len, int total_len) {
    cfsum::NoGradGuard ng;
    std::vector<cfsum::Tensor> ts;
    for (const auto& a : attentions) ts.push_back(to_tensor(a));
    return cfsum::t2v(ts, text_len, total_len).data();
  });

  m.def("rouge_n", &cfsum::rouge_n);
  m.def("rouge_l", &cfsum::rouge_l);
  m.def("lcs_length", &cfsum::lcs_length);
  m.def("bleu", &cfsum::bleu);

  m.def("synth_corpus", [](int n, std::uint64_t seed, int classes, double rho_noise) {
    cfsum::SynthConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    cfg.classes = classes;
    cfg.rho_noise = rho_noise;
    auto corpus = cfsum::synth_generate(cfg);
    py::list out;
    for (const auto& s : corpus.samples) {
      py::dict d;
      d["id"] = s.id;
      d["text"] = corpus.vocab.decode(s.text_tokens);
      d["summary"] = corpus.vocab.decode(s.summary_tokens);
      d["image_regions"] = s.image_regions;
      d["phrases"] = s.phrase_spans;
      out.append(d);
    }
    return out;
  }, py::arg("n"), py::arg("seed") = 1, py::arg("classes") = 4,
     py::arg("rho_noise") = 0.2);
}
