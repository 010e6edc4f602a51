#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mmea/alignloss.hpp"
#include "mmea/cli.hpp"
#include "mmea/inference.hpp"
#include "mmea/seeding.hpp"
#include "mmea/synth.hpp"
#include "mmea/trainer.hpp"

namespace py = pybind11;
using namespace mmea;

namespace {

using Gold = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["h1"] = r.hits_at_1;
  d["h10"] = r.hits_at_10;
  d["mrr"] = r.mrr;
  d["n"] = r.n_queries;
  py::list strata;
  for (const auto& s : r.per_stratum) {
    py::dict sd;
    sd["lo"] = s.degree_low;
    sd["hi"] = s.degree_high;
    sd["n"] = s.n_queries;
    sd["h1"] = s.hits_at_1;
    sd["h10"] = s.hits_at_10;
    sd["mrr"] = s.mrr;
    strata.append(sd);
  }
  d["strata"] = strata;
  return d;
}

std::vector<std::string> modality_names(const std::vector<Modality>& ms) {
  std::vector<std::string> out;
  for (Modality m : ms) out.emplace_back(modality_name(m));
  return out;
}

std::vector<Modality> parse_modalities(const std::vector<std::string>& names) {
  std::vector<Modality> out;
  for (const auto& n : names) out.push_back(parse_modality(n));
  return out;
}

}  // namespace

PYBIND11_MODULE(_mmea, m) {
  m.doc() = "Multi-modal knowledge graph entity alignment.";

  m.def("nca_loss", [](const Matrix& sim, double alpha, double beta) { return nca_loss(sim, alpha, beta); },
        py::arg("sim"), py::arg("alpha"), py::arg("beta") = 10.0);
  m.def("csls_adjust", &csls_adjust, py::arg("sim"), py::arg("k"));
  m.def(
      "induce_visual_pivots",
      [](const Matrix& sim, std::size_t n) {
        std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> out;
        for (const auto& p : induce_visual_pivots(sim, n)) out.emplace_back(p.row, p.col, p.score);
        return out;
      },
      py::arg("sim"), py::arg("n"), "Greedy one-to-one pairs as (row, col, score), best first.");
  m.def(
      "evaluate", [](const Matrix& sim, const Gold& gold, bool use_csls, std::size_t k) {
        return report_dict(evaluate(sim, gold, use_csls, k));
      },
      py::arg("sim"), py::arg("gold"), py::arg("use_csls") = false, py::arg("k") = 3);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("entities", &SynthConfig::entities)
      .def_readwrite("triples", &SynthConfig::triples)
      .def_readwrite("relations", &SynthConfig::relations)
      .def_readwrite("edge_dropout", &SynthConfig::edge_dropout)
      .def_readwrite("image_noise", &SynthConfig::image_noise)
      .def_readwrite("relation_noise", &SynthConfig::relation_noise)
      .def_readwrite("attribute_noise", &SynthConfig::attribute_noise)
      .def_readwrite("surface_noise", &SynthConfig::surface_noise)
      .def_readwrite("image_coverage", &SynthConfig::image_coverage)
      .def_readwrite("surface", &SynthConfig::surface)
      .def_readwrite("train_fraction", &SynthConfig::train_fraction)
      .def_readwrite("seed", &SynthConfig::seed);

  py::class_<AlignmentTask>(m, "AlignmentTask")
      .def_property_readonly("n_source", [](const AlignmentTask& t) { return t.source.entity_count(); })
      .def_property_readonly("n_target", [](const AlignmentTask& t) { return t.target.entity_count(); })
      .def_property_readonly("source_triples", [](const AlignmentTask& t) { return t.source.triples.size(); })
      .def_property_readonly("target_triples", [](const AlignmentTask& t) { return t.target.triples.size(); })
      .def_readonly("train_pivots", &AlignmentTask::train_pivots)
      .def_readonly("test_pivots", &AlignmentTask::test_pivots)
      .def_property_readonly("modalities", [](const AlignmentTask& t) { return modality_names(task_modalities(t)); });

  m.def(
      "synthesize",
      [](const SynthConfig& cfg) {
        SynthTask st = generate_synthetic_task(cfg);
        return py::make_tuple(std::move(st.task), st.gold);
      },
      py::arg("config") = SynthConfig{}, "Returns (task, gold pivots).");
  m.def("load_task", py::overload_cast<const std::filesystem::path&>(&load_task), py::arg("manifest"));
  m.def("save_task", &save_task, py::arg("task"), py::arg("dir"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static(
          "from_file", [](const std::filesystem::path& p) { return TrainConfig::from_config(KeyValueConfig::load(p)); })
      .def_readwrite("base_epochs", &TrainConfig::base_epochs)
      .def_readwrite("il_epochs", &TrainConfig::il_epochs)
      .def_readwrite("rng_seed", &TrainConfig::rng_seed)
      .def_readwrite("unsupervised", &TrainConfig::unsupervised)
      .def_readwrite("visual_pivot_count", &TrainConfig::visual_pivot_count)
      .def_readwrite("pivot_threshold", &TrainConfig::pivot_threshold)
      .def_readwrite("use_csls", &TrainConfig::use_csls)
      .def_readwrite("csls_k", &TrainConfig::csls_k)
      .def_property(
          "learning_rate", [](const TrainConfig& c) { return c.optimizer.learning_rate; },
          [](TrainConfig& c, double v) { c.optimizer.learning_rate = v; })
      .def_property(
          "gcn_dims", [](const TrainConfig& c) { return c.dims.gcn; },
          [](TrainConfig& c, const std::vector<Eigen::Index>& v) { c.dims.gcn = v; })
      .def(
          "set_projection_dim",
          [](TrainConfig& c, const std::string& modality, Eigen::Index d) {
            c.dims.projection[parse_modality(modality)] = d;
          },
          py::arg("modality"), py::arg("dim"))
      .def_property(
          "disabled", [](const TrainConfig& c) { return modality_names(c.disabled); },
          [](TrainConfig& c, const std::vector<std::string>& v) { c.disabled = parse_modalities(v); });

  py::class_<TrainState>(m, "TrainState")
      .def_readonly("epoch", &TrainState::epoch)
      .def_property_readonly("modalities", [](const TrainState& s) { return modality_names(s.modalities()); })
      .def_property_readonly("pivot_count", [](const TrainState& s) { return s.ledger.permanent().size(); })
      .def_property_readonly("history", [](const TrainState& s) {
        py::list out;
        for (const auto& r : s.history) {
          py::dict d;
          d["epoch"] = r.epoch;
          d["loss"] = r.loss;
          d["pivot_count"] = r.pivot_count;
          d["weights"] = r.weights;
          out.append(d);
        }
        return out;
      });

  m.def("train", &train, py::arg("task"), py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "evaluate_model",
      [](const TrainState& st, const AlignmentTask& task, const TrainConfig& cfg, bool stratified) {
        return report_dict(evaluate_model(st, task, cfg, stratified));
      },
      py::arg("state"), py::arg("task"), py::arg("config"), py::arg("stratified") = true);
  m.def(
      "visual_pivots",
      [](const AlignmentTask& task, std::size_t n, std::optional<double> threshold) {
        std::vector<std::tuple<EntityId, EntityId, double>> out;
        for (const auto& p : visual_pivots(task, n, threshold)) out.emplace_back(p.source, p.target, p.score);
        return out;
      },
      py::arg("task"), py::arg("n") = 0, py::arg("threshold") = py::none());
  m.def("save_checkpoint", &save_checkpoint, py::arg("state"), py::arg("dir"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("dir"));

  m.def(
      "main",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"mmea"};
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the command line with `args` (without the program name).");
}
