// Python bindings. Configs cross the boundary as JSON text; the python
// package wraps that in dicts.

#include "osda/checkpoint.hpp"
#include "osda/config.hpp"
#include "osda/eval.hpp"
#include "osda/losses.hpp"
#include "osda/negatives.hpp"
#include "osda/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace osda;

namespace {

TrainConfig config_from(const std::string& text) {
  TrainConfig c = train_config_from_json(text.empty() ? Json::object() : Json::parse(text));
  c.validate();
  return c;
}

py::tuple loss_result(const losses::LossResult& r) {
  return py::make_tuple(r.value(), r.grad, r.loss.components);
}

losses::LossResult run_loss(const std::string& name, const Matrix& x, const std::vector<int>& labels, bool probs) {
  auto closed = [&] { return probs ? ClosedSetOutput::from_probs(x) : ClosedSetOutput::from_logits(x); };
  auto open = [&] { return probs ? OpenSetOutput::from_probs(x) : OpenSetOutput::from_logits(x); };
  if (name == "closed_set_cross_entropy") return losses::closed_set_cross_entropy(closed(), labels);
  if (name == "hard_negative_classifier_sampling") return losses::hard_negative_classifier_sampling_loss(open(), labels);
  if (name == "open_set_entropy_minimization") return losses::open_set_entropy_minimization(open());
  if (name == "negative_constraint") return losses::negative_constraint_loss(open());
  if (name == "generator_entropy") return losses::generator_entropy_loss(closed());
  if (name == "generator_agreement") return losses::generator_agreement_loss(open());
  throw ConfigError("unknown loss '" + name + "'");
}

py::dict predictions(const std::vector<Prediction>& ps) {
  const auto n = static_cast<long>(ps.size());
  Eigen::VectorXi label(n);
  Eigen::VectorXd prob(n);
  Eigen::Matrix<bool, Eigen::Dynamic, 1> known(n);
  for (long i = 0; i < n; ++i) {
    label(i) = ps[static_cast<std::size_t>(i)].pseudo_label;
    prob(i) = ps[static_cast<std::size_t>(i)].known_prob;
    known(i) = ps[static_cast<std::size_t>(i)].is_known;
  }
  py::dict d;
  d["pseudo_label"] = label;
  d["known_prob"] = prob;
  d["is_known"] = known;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "open-set domain adaptation core";

  auto base = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  (void)base;

  m.def("h_score", &h_score, py::arg("acc_known"), py::arg("acc_unknown"));
  m.def(
      "loss",
      [](const std::string& name, const Matrix& x, const std::vector<int>& labels, bool probs) {
        return loss_result(run_loss(name, x, labels, probs));
      },
      py::arg("name"), py::arg("x"), py::arg("labels") = std::vector<int>{}, py::arg("from_probs") = false,
      "Returns (value, gradient w.r.t. the logits, components). Open-set probabilities given with\n"
      "from_probs=True are treated as (log p, log(1 - p)) logit pairs.");

  py::class_<LabelSpace>(m, "LabelSpace")
      .def(py::init<std::vector<std::string>, std::vector<std::string>, bool>(), py::arg("known"),
           py::arg("unknown") = std::vector<std::string>{}, py::arg("keep_order") = false)
      .def_property_readonly("known", &LabelSpace::known)
      .def_property_readonly("unknown", &LabelSpace::unknown)
      .def("__eq__", [](const LabelSpace& a, const LabelSpace& b) { return a == b; })
      .def("__repr__", [](const LabelSpace& l) { return "LabelSpace(" + to_json(l).dump() + ")"; });

  py::class_<DomainDataset, std::shared_ptr<DomainDataset>>(m, "Dataset")
      .def(py::init([](const std::string& name, bool target, const Matrix& x, std::vector<std::string> labels) {
             return std::make_shared<DomainDataset>(name, target ? DomainRole::Target : DomainRole::Source,
                                                    DataMode::Vector, x, std::move(labels));
           }),
           py::arg("name"), py::arg("target"), py::arg("samples"), py::arg("labels"))
      .def_property_readonly("name", &DomainDataset::name)
      .def_property_readonly("samples", &DomainDataset::samples)
      .def_property_readonly("labels", &DomainDataset::evaluation_labels)
      .def_property_readonly("ids", &DomainDataset::ids)
      .def("__len__", &DomainDataset::size);

  auto as_tuple = [](LoadedData d) {
    return py::make_tuple(std::make_shared<DomainDataset>(std::move(d.source)),
                          std::make_shared<DomainDataset>(std::move(d.target)), d.label_space);
  };
  m.def(
      "synthetic_benchmark",
      [as_tuple](const std::string& spec) {
        auto b = make_synthetic_benchmark(synthetic_spec_from_json(spec.empty() ? Json::object() : Json::parse(spec)));
        return as_tuple({std::move(b.source), std::move(b.target), std::move(b.label_space)});
      },
      py::arg("spec_json") = "");
  m.def(
      "load_data", [as_tuple](const std::string& spec) { return as_tuple(load_data(dataset_spec_from_json(Json::parse(spec)))); },
      py::arg("dataset_json"));

  py::class_<OpenSetModel, std::shared_ptr<OpenSetModel>>(m, "Model")
      .def_property_readonly("label_space", &OpenSetModel::label_space)
      .def_property_readonly("feature_dim", &OpenSetModel::feature_dim)
      .def("infer", [](OpenSetModel& self, const Matrix& x) { return predictions(self.infer(x)); })
      .def("features", &OpenSetModel::forward_features)
      .def("save", [](std::shared_ptr<OpenSetModel> self, const std::filesystem::path& p) {
        TrainConfig cfg;
        cfg.backbone = self->backbone_spec();
        Checkpoint c;
        c.header = {{"kind", "model"}, {"label_space", to_json(self->label_space())}, {"config", to_json(cfg)}};
        store_model(c, *self);
        write_checkpoint(p, c);
      });
  m.def("load_model", &load_model, py::arg("path"));

  m.def("default_config", [] { return to_json(TrainConfig{}).dump(); });
  m.def("normalize_config", [](const std::string& j) { return to_json(config_from(j)).dump(); });
  m.def(
      "event_schedule", [](const std::string& j) { return event_schedule(config_from(j)); }, py::arg("config_json"));
  m.def(
      "train",
      [](const std::string& j, const DomainDataset& s, const DomainDataset& t, const LabelSpace& ls) {
        py::gil_scoped_release nogil;
        return train(config_from(j), s, t, ls).model;
      },
      py::arg("config_json"), py::arg("source"), py::arg("target"), py::arg("label_space"));

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const std::string& j, const DomainDataset& s, const DomainDataset& t, const LabelSpace& ls) {
             return Trainer(config_from(j), s, t, ls);
           }),
           py::arg("config_json"), py::arg("source"), py::arg("target"), py::arg("label_space"), py::keep_alive<1, 3>(),
           py::keep_alive<1, 4>())
      .def_static(
          "resume",
          [](const std::filesystem::path& p, const DomainDataset& s, const DomainDataset& t, const LabelSpace& ls) {
            return Trainer::resume(p, s, t, ls);
          },
          py::arg("path"), py::arg("source"), py::arg("target"), py::arg("label_space"), py::keep_alive<0, 2>(),
          py::keep_alive<0, 3>())
      .def("step", &Trainer::step)
      .def("run_until", &Trainer::run_until, py::call_guard<py::gil_scoped_release>())
      .def("run", &Trainer::run, py::call_guard<py::gil_scoped_release>())
      .def("save", &Trainer::save)
      .def("write_loss_csv", &Trainer::write_loss_csv)
      .def_property_readonly("done", &Trainer::done)
      .def_property_readonly("iteration", [](const Trainer& t) { return t.state().iteration; })
      .def_property_readonly("model", &Trainer::shared_model)
      .def_property_readonly("config_json", [](const Trainer& t) { return to_json(t.config()).dump(); })
      .def_property_readonly("warnings", [](const Trainer& t) { return t.state().warnings; })
      .def_property_readonly("events",
                             [](const Trainer& t) {
                               py::list out;
                               for (const auto& e : t.state().events)
                                 out.append(py::make_tuple(
                                     e.iteration, e.kind == EventKind::Extraction ? "extraction" : "gan", e.negatives));
                               return out;
                             })
      .def_property_readonly("loss_history", [](const Trainer& t) {
        py::list out;
        for (const auto& r : t.state().loss_history)
          out.append(py::make_tuple(r.iteration, to_string(r.phase), r.name, r.value));
        return out;
      });

  m.def(
      "evaluate",
      [](OpenSetModel& model, const DomainDataset& target, const LabelSpace& ls) {
        return report_to_json(evaluate(model, target, ls)).dump();
      },
      py::arg("model"), py::arg("target"), py::arg("label_space"));
  m.def(
      "evaluate_decisions",
      [](const std::vector<std::pair<std::string, std::optional<std::string>>>& rows, const LabelSpace& ls) {
        std::vector<Decision> ds;
        for (const auto& [truth, pred] : rows) ds.push_back({truth, pred});
        return report_to_json(evaluate_decisions(std::move(ds), ls)).dump();
      },
      py::arg("decisions"), py::arg("label_space"));
  m.def(
      "extract_negatives",
      [](OpenSetModel& model, const DomainDataset& target, double threshold) {
        const auto set = extract_negatives(model, target.unlabeled(), threshold);
        py::list out;
        for (const auto& it : set.items()) out.append(py::make_tuple(it.sample_index, it.sample_id, it.unknown_confidence));
        return out;
      },
      py::arg("model"), py::arg("target"), py::arg("threshold") = kDefaultExtractionThreshold);
  m.def(
      "openness_sweep",
      [](const std::string& config, const std::string& spec, const std::vector<int>& counts, int repeats) {
        const TrainConfig cfg = config_from(config);
        TrainFn fn = [&](const DomainDataset& s, const DomainDataset& t, const LabelSpace& ls, int repeat) {
          TrainConfig c = cfg;
          c.seed = cfg.seed + static_cast<std::uint64_t>(repeat);
          return train(c, s, t, ls).model;
        };
        py::list out;
        for (const auto& r : openness_sweep(fn, synthetic_spec_from_json(spec.empty() ? Json::object() : Json::parse(spec)),
                                            counts, repeats)) {
          py::dict d;
          d["unknown_count"] = r.unknown_count;
          d["skipped"] = r.skipped;
          d["hsc"] = r.mean_h_score;
          d["acc_known"] = r.mean_acc_known;
          d["acc_unknown"] = r.mean_acc_unknown;
          out.append(d);
        }
        return out;
      },
      py::arg("config_json"), py::arg("spec_json"), py::arg("counts"), py::arg("repeats") = 1);
}
