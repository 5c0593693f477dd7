// Python bindings for the core operations: dataset handling, sampler
// fitting, training, evaluation and embedding dumps. The extension wraps the
// f32 train profile.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dps/checkpoint.hpp"
#include "dps/gradcheck.hpp"
#include "dps/graph.hpp"
#include "dps/metrics.hpp"
#include "dps/tds.hpp"
#include "dps/trainer.hpp"

namespace py = pybind11;
using Real = float;

namespace {

py::dict report_to_dict(const dps::EvalReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["auc"] = r.auc;
  d["n_pos"] = r.n_pos;
  d["n_neg"] = r.n_neg;
  d["epochs"] = r.epochs;
  d["best_epoch"] = r.best_epoch;
  d["val_auc"] = r.val_auc;
  d["loss_history"] = r.loss_history;
  return d;
}

dps::TrainConfig config_from_kwargs(const py::kwargs& kwargs) {
  dps::TrainConfig cfg;
  for (auto item : kwargs) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "batch_size") cfg.batch_size = py::cast<int>(item.second);
    else if (key == "dropout") cfg.dropout = py::cast<double>(item.second);
    else if (key == "layers") cfg.layers = py::cast<int>(item.second);
    else if (key == "heads") cfg.heads = py::cast<int>(item.second);
    else if (key == "neighbors") cfg.neighbors = py::cast<int>(item.second);
    else if (key == "lr") cfg.lr = py::cast<double>(item.second);
    else if (key == "weight_decay") cfg.weight_decay = py::cast<double>(item.second);
    else if (key == "patience") cfg.patience = py::cast<int>(item.second);
    else if (key == "max_epochs") cfg.max_epochs = py::cast<int>(item.second);
    else if (key == "seed") cfg.seed = py::cast<uint64_t>(item.second);
    else if (key == "d_model") cfg.d_model = py::cast<int>(item.second);
    else if (key == "d_time") cfg.d_time = py::cast<int>(item.second);
    else if (key == "sampler_mode")
      cfg.sampler_mode = dps::sampler_mode_from(py::cast<std::string>(item.second));
    else if (key == "tau_start") cfg.tau_start = py::cast<double>(item.second);
    else if (key == "tau_decay") cfg.tau_decay = py::cast<double>(item.second);
    else if (key == "tau_floor") cfg.tau_floor = py::cast<double>(item.second);
    else throw std::invalid_argument("unknown config key: " + key);
  }
  cfg.validate();
  return cfg;
}

std::vector<std::vector<float>> embed_matrix(dps::DpsBundle<Real>& bundle,
                                             const dps::TemporalGraph& g,
                                             const std::vector<int32_t>& nodes,
                                             const std::vector<double>& times, uint64_t seed) {
  dps::DpsForward<Real> fwd(g, bundle);
  dps::Rng rng(dps::Rng::mix(seed, 0xbead));
  dps::ad::Tensor<Real> h = fwd.embed(nodes, times, false, rng);
  std::vector<std::vector<float>> out(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i)
    for (int64_t c = 0; c < h.shape()[1]; ++c) out[i].push_back(h.at(int64_t(i), c));
  return out;
}

}  // namespace

PYBIND11_MODULE(_dps_core, m) {
  m.doc() = "Temporal-network preference-structure embeddings (C++ core)";

  py::class_<dps::NeighborEntry>(m, "NeighborEntry")
      .def_readonly("node", &dps::NeighborEntry::node)
      .def_readonly("time", &dps::NeighborEntry::time)
      .def_readonly("edge_id", &dps::NeighborEntry::edge_id);

  py::class_<dps::TemporalGraph>(m, "TemporalGraph")
      .def_static(
          "load",
          [](const std::string& path, double divisor, bool has_features,
             const std::string& format) {
            dps::LoadOptions opts;
            opts.time_unit_divisor = divisor;
            opts.has_features = has_features;
            opts.format = format;
            return dps::load_edge_list(path, opts);
          },
          py::arg("path"), py::arg("divisor") = 86400.0, py::arg("has_features") = false,
          py::arg("format") = "auto")
      .def_static(
          "synth",
          [](int32_t nodes, int64_t edges, int32_t communities, double decay, uint64_t seed) {
            dps::SynthParams p;
            p.num_nodes = nodes;
            p.num_edges = edges;
            p.num_communities = communities;
            p.decay_rate = decay;
            p.seed = seed;
            return dps::synth_generate(p);
          },
          py::arg("nodes"), py::arg("edges"), py::arg("communities") = 10,
          py::arg("decay") = 1.0, py::arg("seed") = 1)
      .def("save",
           [](const dps::TemporalGraph& g, const std::string& path) {
             dps::save_edge_list(g, path);
           },
           py::arg("path"))
      .def("num_nodes", &dps::TemporalGraph::num_nodes)
      .def("num_edges", &dps::TemporalGraph::num_edges)
      .def("feature_dim", &dps::TemporalGraph::feature_dim)
      .def("timespan", &dps::TemporalGraph::timespan)
      .def("density", &dps::TemporalGraph::density)
      .def("repetition_fraction", &dps::TemporalGraph::repetition_fraction)
      .def("node_labels", &dps::TemporalGraph::node_labels)
      .def("neighbors_before", [](const dps::TemporalGraph& g, int32_t u, double t) {
        return g.neighbors_before(u, t).entries;
      });

  py::class_<dps::ChronoSplit>(m, "ChronoSplit")
      .def_readonly("train", &dps::ChronoSplit::train)
      .def_readonly("val", &dps::ChronoSplit::val)
      .def_readonly("test", &dps::ChronoSplit::test)
      .def_readonly("removed", &dps::ChronoSplit::removed);

  m.def(
      "chrono_split",
      [](const dps::TemporalGraph& g, double train, double val, double test) {
        return dps::chrono_split(g, {train, val, test});
      },
      py::arg("graph"), py::arg("train") = 0.70, py::arg("val") = 0.15, py::arg("test") = 0.15);

  py::class_<dps::DecayRates>(m, "DecayRates")
      .def_readonly("lambdas", &dps::DecayRates::lambda)
      .def_readonly("fallback_lambda", &dps::DecayRates::fallback_lambda)
      .def("fitted", [](const dps::DecayRates& r) {
        return std::vector<int>(r.fitted.begin(), r.fitted.end());
      });

  m.def(
      "fit_tds",
      [](const dps::TemporalGraph& g, const dps::ChronoSplit& split, uint64_t seed, int budget) {
        return dps::fit_all(g, split, seed, budget);
      },
      py::arg("graph"), py::arg("split"), py::arg("seed") = 0,
      py::arg("budget") = dps::kTdsEventBudget);

  py::class_<dps::GasModel<Real>>(m, "GasModel")
      .def_property_readonly("trained", [](const dps::GasModel<Real>& g) { return g.trained; })
      .def("save", [](const dps::GasModel<Real>& model, const dps::TemporalGraph& g,
                      const std::string& path) { dps::save_gas(model, g, path); });
  m.def("load_gas", [](const std::string& path) { return dps::load_gas<Real>(path); });

  m.def("pretrain_gas", [](const dps::TemporalGraph& g, const dps::ChronoSplit& split,
                           const py::kwargs& kwargs) {
    dps::TrainConfig cfg = config_from_kwargs(kwargs);
    dps::EvalReport report;
    dps::GasModel<Real> model = dps::pretrain_gas<Real>(g, split, cfg, &report);
    return py::make_tuple(model, report_to_dict(report));
  });

  py::class_<dps::DpsBundle<Real>>(m, "DpsModel")
      .def_property_readonly("mode",
                             [](const dps::DpsBundle<Real>& b) { return dps::to_string(b.model.mode); })
      .def_property_readonly("d_model",
                             [](const dps::DpsBundle<Real>& b) { return b.model.d_model; })
      .def("save", [](const dps::DpsBundle<Real>& b, const dps::TemporalGraph& g,
                      const std::string& path) { dps::save_bundle(b, g, path); })
      .def("embed", &embed_matrix, py::arg("graph"), py::arg("nodes"), py::arg("times"),
           py::arg("seed") = 0)
      .def("evaluate",
           [](dps::DpsBundle<Real>& b, const dps::TemporalGraph& g,
              const std::vector<int32_t>& edge_ids, uint64_t seed) {
             dps::Rng neg_rng(dps::Rng::mix(seed, 0xe7a1));
             dps::Rng sampler_rng(dps::Rng::mix(seed, 0xe7a2));
             dps::DpsForward<Real> fwd(g, b);
             return report_to_dict(dps::evaluate_links<Real>(fwd, g, edge_ids, neg_rng, sampler_rng));
           },
           py::arg("graph"), py::arg("edge_ids"), py::arg("seed") = 0);
  m.def("load_model", [](const std::string& path) { return dps::load_bundle<Real>(path); });

  m.def("train_dps", [](const dps::TemporalGraph& g, const dps::ChronoSplit& split,
                        const dps::DecayRates* rates, const dps::GasModel<Real>* gas,
                        const py::kwargs& kwargs) {
    dps::TrainConfig cfg = config_from_kwargs(kwargs);
    dps::TrainResult<Real> res = dps::train_dps<Real>(g, split, rates, gas, cfg);
    return py::make_tuple(std::move(res.bundle), report_to_dict(res.report));
  }, py::arg("graph"), py::arg("split"), py::arg("rates") = nullptr, py::arg("gas") = nullptr);

  m.def("auc_score", &dps::auc_score, py::arg("pos_scores"), py::arg("neg_scores"));
  m.def("accuracy_score", &dps::accuracy_score, py::arg("pos_scores"), py::arg("neg_scores"),
        py::arg("threshold") = 0.5);

  m.def("gradient_suite", [](uint64_t seed) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& c : dps::run_gradient_suite(seed)) out.emplace_back(c.name, c.max_rel_err);
    return out;
  }, py::arg("seed") = 11);
}
