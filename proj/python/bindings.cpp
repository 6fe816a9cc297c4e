/**
 * Copyright 2026 The splitsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "splitsim/error.hpp"
#include "splitsim/gradcheck.hpp"
#include "splitsim/harness.hpp"

namespace py = pybind11;
using namespace splitsim;

namespace {

py::array_t<float> to_numpy(const Tensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

Dataset from_numpy(py::array_t<float, py::array::c_style | py::array::forcecast> x, py::array_t<std::int64_t> y,
                   std::size_t classes) {
  Shape shape(x.shape(), x.shape() + x.ndim());
  Dataset ds;
  ds.samples = Tensor(shape, std::vector<float>(x.data(), x.data() + x.size()));
  ds.labels.assign(y.data(), y.data() + y.size());
  ds.classes = classes;
  ds.validate();
  return ds;
}

ModelSpec model_by_name(const std::string& name, const Shape& input_shape, std::size_t classes) {
  ModelChoice choice;
  choice.name = name;
  return choice.build(input_shape, classes);
}

py::dict report_dict(const RunReport& r) {
  py::dict d;
  d["protocol"] = r.protocol;
  d["final_accuracy"] = r.final_accuracy;
  d["best_accuracy"] = r.best_accuracy;
  d["bytes_total"] = r.ledger.total_bytes();
  d["bytes_up"] = r.ledger.bytes(Direction::up);
  d["bytes_down"] = r.ledger.bytes(Direction::down);
  d["rounds"] = r.ledger.round_count();
  d["gradient_transfers"] = r.ledger.count(TransferKind::gradient);
  d["activation_transfers"] = r.ledger.count(TransferKind::activation);
  d["device_flops"] = r.device_flops_total();
  d["server_flops"] = r.server_flops;
  d["sim_time_s"] = r.sim_time_s;
  d["device_epochs_run"] = r.device_epochs_run;
  d["server_epochs_run"] = r.server_epochs_run;
  py::list epochs;
  for (const auto& e : r.epochs) {
    py::dict row;
    row["epoch"] = e.epoch;
    row["phase"] = std::string(phase_name(e.phase));
    row["loss"] = e.train_loss;
    row["val_accuracy"] = e.val_accuracy;
    row["cum_bytes_up"] = e.cum_bytes_up;
    row["cum_bytes_down"] = e.cum_bytes_down;
    epochs.append(row);
  }
  d["epochs"] = epochs;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "splitsim native core";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<TrainingConfig>(m, "TrainingConfig")
      .def(py::init<>())
      .def_readwrite("devices", &TrainingConfig::devices)
      .def_readwrite("devices_per_round", &TrainingConfig::devices_per_round)
      .def_readwrite("split_point", &TrainingConfig::split_point)
      .def_readwrite("aux_ratio", &TrainingConfig::aux_ratio)
      .def_readwrite("lr_device", &TrainingConfig::lr_device)
      .def_readwrite("lr_server", &TrainingConfig::lr_server)
      .def_readwrite("device_epochs", &TrainingConfig::device_epochs)
      .def_readwrite("server_epochs", &TrainingConfig::server_epochs)
      .def_readwrite("batch_device", &TrainingConfig::batch_device)
      .def_readwrite("batch_server", &TrainingConfig::batch_server)
      .def_readwrite("patience", &TrainingConfig::patience)
      .def_readwrite("alpha", &TrainingConfig::alpha)
      .def_readwrite("epsilon", &TrainingConfig::epsilon)
      .def_readwrite("seed", &TrainingConfig::seed)
      .def_readwrite("bandwidth_bps", &TrainingConfig::bandwidth_bps)
      .def_readwrite("validation_fraction", &TrainingConfig::validation_fraction)
      .def_readwrite("label_bytes", &TrainingConfig::label_bytes)
      .def_readwrite("concurrent_phase3", &TrainingConfig::concurrent_phase3)
      .def("validate", &TrainingConfig::validate);

  m.def(
      "make_synthetic",
      [](std::size_t n, std::size_t classes, const std::string& kind, const Shape& shape, std::uint64_t seed,
         double noise) {
        const Dataset ds = make_synthetic(n, classes, parse_synthetic_kind(kind), shape, seed, noise);
        py::array_t<std::int64_t> y(static_cast<py::ssize_t>(ds.size()));
        std::copy(ds.labels.begin(), ds.labels.end(), y.mutable_data());
        return py::make_tuple(to_numpy(ds.samples), y);
      },
      py::arg("n"), py::arg("classes"), py::arg("kind") = "blobs", py::arg("shape") = Shape{8}, py::arg("seed") = 1,
      py::arg("noise") = 1.0);

  m.def(
      "dirichlet_partition",
      [](py::array_t<float, py::array::c_style | py::array::forcecast> x, py::array_t<std::int64_t> y,
         std::size_t classes, std::size_t devices, double alpha, double epsilon, std::uint64_t seed) {
        const Dataset ds = from_numpy(x, y, classes);
        const Partition p = dirichlet_partition(ds, devices, alpha, epsilon, seed);
        return py::make_tuple(p.assignment, p.counts, mean_partition_tv(ds, p));
      },
      py::arg("x"), py::arg("y"), py::arg("classes"), py::arg("devices"), py::arg("alpha"),
      py::arg("epsilon") = 1e-9, py::arg("seed") = 1);

  m.def(
      "closed_form_comm",
      [](const std::string& model, const Shape& input_shape, std::size_t classes, const std::string& variant,
         std::size_t split, std::uint64_t epochs, std::uint64_t samples, std::uint64_t participants,
         double aux_ratio, bool label_bytes) {
        const CostModel cm =
            make_cost_model(model_by_name(model, input_shape, classes), samples, aux_ratio, label_bytes);
        Variant v = Variant::uit;
        if (variant == "sfl") {
          v = Variant::sfl;
        } else if (variant == "fl") {
          v = Variant::fl;
        } else if (variant != "uit") {
          throw ConfigError("unknown variant '" + variant + "'");
        }
        return closed_form_comm(cm, v, split, epochs, participants);
      },
      py::arg("model"), py::arg("input_shape"), py::arg("classes"), py::arg("variant"), py::arg("split"),
      py::arg("epochs"), py::arg("samples"), py::arg("participants") = 1, py::arg("aux_ratio") = 0.5,
      py::arg("label_bytes") = true);

  m.def(
      "break_even_epochs",
      [](const std::string& model, const Shape& input_shape, std::size_t classes, std::size_t split,
         std::uint64_t samples, double aux_ratio) {
        return fl_break_even_epochs(make_cost_model(model_by_name(model, input_shape, classes), samples, aux_ratio),
                                    split);
      },
      py::arg("model"), py::arg("input_shape"), py::arg("classes"), py::arg("split"), py::arg("samples"),
      py::arg("aux_ratio") = 0.5);

  m.def(
      "run_protocol",
      [](const std::string& protocol, const TrainingConfig& cfg, const std::string& model,
         py::array_t<float, py::array::c_style | py::array::forcecast> x, py::array_t<std::int64_t> y,
         std::size_t classes) {
        const Dataset full = from_numpy(x, y, classes);
        const ModelSpec spec = model_by_name(model, full.sample_shape(), classes);
        RunReport r;
        {
          py::gil_scoped_release release;
          const FederatedData data = prepare_data(full, cfg);
          r = run_protocol(parse_protocol(protocol), cfg, spec, data);
        }
        return report_dict(r);
      },
      py::arg("protocol"), py::arg("config"), py::arg("model"), py::arg("x"), py::arg("y"), py::arg("classes"));

  m.def(
      "run_config",
      [](const std::string& path, bool sweep, std::optional<std::string> out_dir, std::optional<std::uint64_t> seed,
         std::size_t jobs) {
        ExperimentPlan plan = load_config(path, sweep ? PlanMode::sweep : PlanMode::single);
        apply_overrides(plan, PlanOverrides{seed, out_dir, false, false});
        PlanResult result;
        {
          py::gil_scoped_release release;
          result = run_plan(plan, jobs);
        }
        return py::module_::import("json").attr("loads")(summary_json(result));
      },
      py::arg("path"), py::arg("sweep") = false, py::arg("out_dir") = py::none(), py::arg("seed") = py::none(),
      py::arg("jobs") = 1);

  m.def(
      "gradcheck",
      [](std::size_t cases, std::uint64_t seed) {
        py::dict out;
        for (const auto& r : gradcheck_all(cases, seed)) out[py::str(r.name)] = r.max_rel_error;
        return out;
      },
      py::arg("cases") = 20, py::arg("seed") = 7);
}
