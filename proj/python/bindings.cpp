/* Copyright 2026 The exitlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Python bindings: metrics, data generation, checkpoint inference and the
// experiment commands. Configs cross the boundary as JSON text.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "exitlab/data.hpp"
#include "exitlab/error.hpp"
#include "exitlab/exiting.hpp"
#include "exitlab/experiment.hpp"
#include "exitlab/harness.hpp"
#include "exitlab/metrics.hpp"
#include "exitlab/model.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace exitlab;

namespace {

ExperimentConfig parse_config(const std::string& text) {
  return text.empty() ? default_experiment()
                      : experiment_from_json(nlohmann::json::parse(text));
}

py::tuple split_arrays(const Dataset& d) {
  Mat x = d.empty() ? Mat(0, 0) : stack_inputs(d);
  return py::make_tuple(Mat(x.transpose()), labels_of(d));
}

py::dict trace_dict(const ExitTrace& t) {
  py::list layers;
  for (const auto& r : t.per_layer) {
    py::dict l;
    l["entropy"] = r.entropy;
    l["dr"] = r.dr;
    l["edr"] = r.edr;
    l["predicted"] = r.predicted;
    layers.append(l);
  }
  py::dict d;
  d["exit_layer"] = t.exit_layer;
  d["predicted"] = t.predicted;
  d["per_layer"] = layers;
  return d;
}

py::dict row_dict(const SweepRow& r) {
  py::dict d;
  d["tau"] = r.tau;
  d["accuracy"] = r.accuracy;
  d["speedup"] = r.speedup;
  d["mean_exit_layer"] = r.mean_exit_layer;
  d["exit_histogram"] = r.exit_histogram;
  d["flops_total"] = r.flops_total;
  d["executed_layers_total"] = r.executed_layers_total;
  return d;
}

ExitPolicy make_policy(const std::string& kind, double tau, double lambda, int patience,
                       int fixed_layer) {
  ExitPolicy p;
  p.kind = policy_kind_from_string(kind);
  p.tau = tau;
  p.lambda = lambda;
  p.patience = patience;
  p.fixed_layer = fixed_layer;
  return p;
}

// A loaded checkpoint ready for inference.
class Network {
 public:
  explicit Network(const fs::path& path)
      : ck_(load_checkpoint(path)), model_(ck_.config, ck_.params) {}

  int num_layers() const { return ck_.config.num_layers; }
  int num_classes() const { return ck_.config.num_classes; }
  int input_dim() const { return ck_.config.input_dim; }
  std::uint64_t step() const { return ck_.step; }

  std::vector<Vec> layer_probs(const Vec& x) const {
    std::vector<Vec> out;
    for (const auto& l : model_.forward(x)) out.push_back(l.probs);
    return out;
  }

  py::dict infer(const Vec& x, const ExitPolicy& p, std::optional<int> label) const {
    p.validate(num_layers());
    return trace_dict(infer_one(model_, ck_.bank, x, p, label));
  }

  py::list sweep_rows(const Mat& xs, const std::vector<int>& ys, const ExitPolicy& p,
                      const std::vector<double>& taus) const {
    if (xs.rows() != static_cast<Eigen::Index>(ys.size())) {
      throw ShapeError("sweep: inputs and labels differ in length");
    }
    Dataset d;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) d.push_back({xs.row(i).transpose(), ys[i]});
    py::list rows;
    for (const auto& r : sweep(model_, ck_.bank, d, p, taus).rows) rows.append(row_dict(r));
    return rows;
  }

 private:
  Checkpoint ck_;
  Model model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distance-enhanced early exiting: metrics, synthetic data, inference and sweeps.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<UninitializedPrototypeError>(m, "UninitializedPrototypeError",
                                                      base.ptr());
  py::register_exception<CorruptFileError>(m, "CorruptFileError", base.ptr());
  py::register_exception<VersionError>(m, "VersionError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("normalized_entropy",
        [](const std::vector<double>& p) { return metrics::normalized_entropy(p); },
        py::arg("probs"));
  m.def("cosine_distance",
        [](const std::vector<double>& u, const std::vector<double>& v) {
          return metrics::cosine_distance(u, v);
        },
        py::arg("u"), py::arg("v"));
  m.def("distance_ratio",
        [](double r1, double r2) { return metrics::distance_ratio({r1, r2}); }, py::arg("r1"),
        py::arg("r2"));
  m.def("edr", &metrics::edr, py::arg("entropy"), py::arg("dr"), py::arg("lam"));
  m.def("speedup_ratio",
        [](const std::vector<std::int64_t>& h) { return speedup_ratio(h); },
        py::arg("exit_histogram"));
  m.def("default_tau_grid", &default_tau_grid);

  m.def("default_config", [] { return canonical_config(default_experiment()); },
        "Default experiment config as JSON text.");
  m.def("config_hash", [](const std::string& cfg) { return config_hash(parse_config(cfg)); },
        py::arg("config"));

  m.def(
      "generate",
      [](const std::string& cfg) {
        const Splits s = generate(parse_config(cfg).data);
        py::dict d;
        d["train"] = split_arrays(s.train);
        d["dev"] = split_arrays(s.dev);
        d["test"] = split_arrays(s.test);
        return d;
      },
      py::arg("config") = "",
      "Generate the synthetic splits; each is an (X[N, d], y[N]) pair.");

  m.def(
      "make_policy", &make_policy, py::arg("kind"), py::arg("tau") = 0.5,
      py::arg("lam") = 1.0, py::arg("patience") = 2, py::arg("fixed_layer") = 1);

  py::class_<ExitPolicy>(m, "ExitPolicy")
      .def_property_readonly("kind", [](const ExitPolicy& p) { return std::string(to_string(p.kind)); })
      .def_readwrite("tau", &ExitPolicy::tau)
      .def_readwrite("lam", &ExitPolicy::lambda)
      .def_readwrite("patience", &ExitPolicy::patience)
      .def_readwrite("fixed_layer", &ExitPolicy::fixed_layer);

  py::class_<Network>(m, "Network")
      .def(py::init<const fs::path&>(), py::arg("checkpoint"))
      .def_property_readonly("num_layers", &Network::num_layers)
      .def_property_readonly("num_classes", &Network::num_classes)
      .def_property_readonly("input_dim", &Network::input_dim)
      .def_property_readonly("step", &Network::step)
      .def("layer_probs", &Network::layer_probs, py::arg("x"))
      .def("infer", &Network::infer, py::arg("x"), py::arg("policy"),
           py::arg("label") = std::nullopt)
      .def("sweep", &Network::sweep_rows, py::arg("X"), py::arg("y"), py::arg("policy"),
           py::arg("taus"));

  auto opts = [](bool overwrite, bool create) { return CommandOptions{overwrite, create}; };
  m.def(
      "gen",
      [opts](const std::string& cfg, bool overwrite, bool create) {
        cmd_gen(parse_config(cfg), opts(overwrite, create));
      },
      py::arg("config"), py::arg("overwrite") = false, py::arg("create") = false);
  m.def(
      "train",
      [opts](const std::string& cfg, bool overwrite, bool create,
             std::optional<fs::path> resume) {
        const TrainResult r = cmd_train(parse_config(cfg), opts(overwrite, create), resume);
        py::dict d;
        d["best_step"] = r.report.best_step;
        d["best_dev_accuracy"] = r.report.best_dev_accuracy;
        d["steps"] = r.report.steps.size();
        return d;
      },
      py::arg("config"), py::arg("overwrite") = false, py::arg("create") = false,
      py::arg("resume") = std::nullopt);
  m.def(
      "sweep",
      [opts](const std::string& cfg, const fs::path& ck, bool overwrite, bool create) {
        py::list out;
        for (const auto& s : cmd_sweep(parse_config(cfg), ck, opts(overwrite, create))) {
          py::list rows;
          for (const auto& r : s.rows) rows.append(row_dict(r));
          out.append(rows);
        }
        return out;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("overwrite") = false,
      py::arg("create") = false);
  m.def(
      "compare",
      [opts](const std::string& cfg, const fs::path& ck, bool overwrite, bool create) {
        py::list out;
        for (const auto& e : cmd_compare(parse_config(cfg), ck, opts(overwrite, create))) {
          py::dict d;
          d["policy"] = e.policy;
          d["target"] = e.target;
          d["lam"] = e.lambda;
          d["row"] = e.row ? py::object(row_dict(*e.row)) : py::none();
          out.append(d);
        }
        return out;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("overwrite") = false,
      py::arg("create") = false);
  m.def(
      "diagnose",
      [opts](const std::string& cfg, const fs::path& ck, std::optional<fs::path> ck_no_pn,
             bool overwrite, bool create) {
        const DiagnoseResult r =
            cmd_diagnose(parse_config(cfg), ck, ck_no_pn, opts(overwrite, create));
        py::list rows;
        for (const auto& c : r.correctness) {
          py::dict d;
          d["layer"] = c.layer;
          d["tau"] = c.tau;
          d["acc_entropy"] = c.acc.entropy;
          d["acc_edr"] = c.acc.edr;
          rows.append(d);
        }
        py::list ranks;
        for (const auto& s : r.spearman) {
          py::dict d;
          d["layer"] = s.layer;
          d["rho_with"] = s.rho.with_projection;
          d["rho_without"] = s.rho.without_projection;
          ranks.append(d);
        }
        py::dict d;
        d["correctness"] = rows;
        d["spearman"] = ranks;
        return d;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("checkpoint_no_pn") = std::nullopt,
      py::arg("overwrite") = false, py::arg("create") = false);
  m.def(
      "shift",
      [opts](const std::string& cfg, const fs::path& ck, bool overwrite, bool create) {
        const ShiftReport r = cmd_shift(parse_config(cfg), ck, opts(overwrite, create));
        auto cond = [](const std::optional<ShiftCondition>& c) -> py::object {
          if (!c) return py::none();
          py::dict d;
          d["tau"] = c->tau;
          d["accuracy"] = c->accuracy;
          d["speedup"] = c->speedup;
          return d;
        };
        py::dict d;
        d["lam"] = r.lambda;
        d["before"] = cond(r.before);
        d["after"] = cond(r.after);
        d["before_matched"] = cond(r.before_matched);
        d["after_matched"] = cond(r.after_matched);
        return d;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("overwrite") = false,
      py::arg("create") = false);
}
