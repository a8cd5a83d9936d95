// Copyright 2026 The seqtrans Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "seqtrans/cli.h"
#include "seqtrans/config.h"
#include "seqtrans/workspace.h"

namespace py = pybind11;

namespace seqtrans {
namespace {

using NdArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array ToArray(const NdArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Array(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

NdArray ToNumpy(const Array& a) {
  NdArray out(std::vector<py::ssize_t>(a.shape().begin(), a.shape().end()));
  std::copy(a.data(), a.data() + a.size(), out.mutable_data());
  return out;
}

// A trained model directory as written by `seqtrans train`.
class TrainedModel {
 public:
  TrainedModel(const std::string& dir, const std::string& checkpoint)
      : config_(RunConfig::Load(std::filesystem::path(dir) / "config.txt")),
        vocab_(Vocabulary::Load(std::filesystem::path(dir) / "vocab.txt")),
        stats_(FeatureStats::Load(std::filesystem::path(dir) / "stats.json")) {
    config_.Finalize(vocab_.size_lm());
    const std::string file = checkpoint.empty() ? config_.checkpoint : checkpoint;
    model_ = Model::FromParams(config_.model, LoadParams(std::filesystem::path(dir) / file));
  }

  // Raw (unnormalized) features in, n-best (text, fused score) out.
  std::vector<std::pair<std::string, double>> Decode(const NdArray& features,
                                                     std::size_t beam_size, double beta3,
                                                     std::size_t nbest) const {
    Array feats = ToArray(features);
    stats_.Apply(feats);
    BeamSearchOptions options = config_.decode;
    options.beam_size = beam_size;
    options.weights.lm = beta3;
    options.nbest = nbest;
    std::vector<std::pair<std::string, double>> out;
    py::gil_scoped_release release;
    for (const Hypothesis& h : BeamSearch(model_, feats, options)) {
      out.emplace_back(vocab_.Decode(h.prefix), h.fused);
    }
    return out;
  }

  std::pair<std::string, double> Greedy(const NdArray& features) const {
    Array feats = ToArray(features);
    stats_.Apply(feats);
    const Hypothesis h = GreedyDecode(model_, feats);
    return {vocab_.Decode(h.prefix), h.fused};
  }

  std::vector<std::string> Tokens() const { return vocab_.tokens(); }
  std::string Config() const { return config_.ToText(); }

 private:
  RunConfig config_;
  Vocabulary vocab_;
  FeatureStats stats_;
  Model model_;
};

}  // namespace
}  // namespace seqtrans

PYBIND11_MODULE(_core, m) {
  using namespace seqtrans;
  m.doc() = "seqtrans core bindings";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);

  m.def(
      "ctc_loss",
      [](const NdArray& log_probs, const std::vector<int>& target) {
        const LossAndGrad r = CtcForwardBackward(ToArray(log_probs), target);
        return py::make_tuple(r.loss, ToNumpy(r.grad));
      },
      py::arg("log_probs"), py::arg("target"),
      "CTC negative log-likelihood of (T, V) log-probs and its gradient.");
  m.def(
      "transducer_loss",
      [](const NdArray& log_probs, const std::vector<int>& target) {
        const LossAndGrad r = TransducerForwardBackward(ToArray(log_probs), target);
        return py::make_tuple(r.loss, ToNumpy(r.grad));
      },
      py::arg("log_probs"), py::arg("target"),
      "Transducer negative log-likelihood of (T, U+1, V) log-probs and its gradient.");
  m.def(
      "brute_force_ctc",
      [](const NdArray& lp, const std::vector<int>& y) { return BruteForceCtc(ToArray(lp), y); },
      py::arg("log_probs"), py::arg("target"));
  m.def(
      "brute_force_transducer",
      [](const NdArray& lp, const std::vector<int>& y) {
        return BruteForceTransducer(ToArray(lp), y);
      },
      py::arg("log_probs"), py::arg("target"));

  m.def(
      "wer",
      [](const std::string& ref, const std::string& hyp) {
        return WordErrors(SplitWords(ref), SplitWords(hyp)).rate();
      },
      py::arg("reference"), py::arg("hypothesis"));
  m.def("relative_reduction", &RelativeReduction, py::arg("baseline"), py::arg("system"));

  m.def(
      "config_text",
      [](const std::string& profile, const std::vector<std::string>& overrides) {
        RunConfig c = RunConfig::Profile(profile);
        for (const auto& kv : overrides) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw ConfigError("expected key=value: " + kv);
          c.Set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return c.ToText();
      },
      py::arg("profile") = "full", py::arg("overrides") = std::vector<std::string>{},
      "Normalized key=value text for a profile plus overrides.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = RunCli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (code, stdout, stderr).");

  py::class_<TrainedModel>(m, "TrainedModel")
      .def(py::init<const std::string&, const std::string&>(), py::arg("model_dir"),
           py::arg("checkpoint") = "")
      .def("decode", &TrainedModel::Decode, py::arg("features"), py::arg("beam_size") = 20,
           py::arg("beta3") = 0.1, py::arg("nbest") = 1)
      .def("greedy", &TrainedModel::Greedy, py::arg("features"))
      .def_property_readonly("tokens", &TrainedModel::Tokens)
      .def_property_readonly("config", &TrainedModel::Config);
}
