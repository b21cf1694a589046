#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ime/gradient_suite.hpp"
#include "ime/trainer.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace ime;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

diff::Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return diff::Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const diff::Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const eval::RankingReport& r) {
  return py::dict("mrr"_a = r.mrr, "hits1"_a = r.hits1, "hits3"_a = r.hits3, "hits10"_a = r.hits10,
                  "n_queries"_a = r.n_queries);
}

py::dict loss_dict(const loss::LossBreakdown& b) {
  return py::dict("task"_a = b.task, "sim"_a = b.sim, "diff"_a = b.diff, "stru"_a = b.stru,
                  "total"_a = b.total);
}

py::list split_list(const std::vector<data::RawQuadruple>& split) {
  py::list out;
  for (const auto& q : split) out.append(py::make_tuple(q.head, q.relation, q.tail, q.timestamp));
  return out;
}

train::TrainConfig config_from_text(const std::string& text) {
  std::istringstream in(text);
  return train::TrainConfig::parse(in);
}

class PyTrainer {
 public:
  explicit PyTrainer(const train::TrainConfig& config)
      : trainer_(config, data::index_dataset(train::load_raw_splits(config))) {}

  py::dict run_epoch() {
    const auto log = trainer_.run_epoch();
    return py::dict("epoch"_a = log.epoch, "step"_a = log.step, "loss"_a = loss_dict(log.loss));
  }

  py::list train() {
    py::list rows;
    trainer_.train([&](const train::EpochLog& log) {
      py::dict row("epoch"_a = log.epoch, "step"_a = log.step, "loss"_a = loss_dict(log.loss));
      if (log.valid) row["valid"] = report_dict(*log.valid);
      rows.append(row);
    });
    return rows;
  }

  py::dict evaluate(const std::string& split, bool use_best) const {
    const auto& d = trainer_.dataset();
    const std::vector<data::Quadruple>* raw = split == "train"   ? &d.train
                                              : split == "valid" ? &d.valid
                                              : split == "test"  ? &d.test
                                                                 : nullptr;
    if (!raw) throw ConfigError("unknown split '" + split + "' (expected train|valid|test)");
    return report_dict(trainer_.evaluate_split(data::augment_reciprocal(*raw, d.n_relations()), use_best));
  }

  std::vector<double> pooling_weights() const { return model::pooling_weight_values(trainer_.params()); }

  py::dict constraints() const {
    const auto c = model::check_constraints(trainer_.params());
    return py::dict("sphere_max_deviation"_a = c.sphere_max_deviation, "ball_max_norm"_a = c.ball_max_norm);
  }

  Array scores(std::size_t s, std::size_t r, std::size_t t) const {
    const auto v = model::score_all(trainer_.params(), s, r, t, trainer_.config().pool);
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
  }

  void save(const std::filesystem::path& path) const { train::save_checkpoint(path, trainer_.checkpoint()); }

  std::size_t epoch() const { return trainer_.state().epoch; }
  std::size_t step() const { return trainer_.state().step; }

 private:
  train::Trainer trainer_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Temporal knowledge graph completion with interaction-aware multi-space embeddings";

  py::register_exception<Error>(m, "Error");

  py::class_<train::TrainConfig>(m, "TrainConfig")
      .def_static("desk", &train::TrainConfig::desk_profile)
      .def_static("paper", &train::TrainConfig::paper_defaults, "dataset"_a = "ICEWS14")
      .def_static("parse", &config_from_text, "text"_a)
      .def_static("load", &train::TrainConfig::load, "path"_a)
      .def(
          "set", [](train::TrainConfig& c, const std::string& k, const std::string& v) { c.set(k, v); },
          "key"_a, "value"_a)
      .def("to_text", &train::TrainConfig::to_text)
      .def("validate", &train::TrainConfig::validate)
      .def_readwrite("dim", &train::TrainConfig::dim)
      .def_readwrite("lr", &train::TrainConfig::lr)
      .def_readwrite("batch_size", &train::TrainConfig::batch_size)
      .def_readwrite("max_epochs", &train::TrainConfig::max_epochs)
      .def_readwrite("seed", &train::TrainConfig::seed)
      .def_property(
          "weights", [](const train::TrainConfig& c) { return py::make_tuple(c.weights.alpha, c.weights.beta, c.weights.gamma); },
          [](train::TrainConfig& c, std::tuple<double, double, double> w) {
            c.weights = {std::get<0>(w), std::get<1>(w), std::get<2>(w)};
          })
      .def("__repr__", &train::TrainConfig::to_text);

  py::class_<PyTrainer>(m, "Trainer")
      .def(py::init<const train::TrainConfig&>(), "config"_a)
      .def("run_epoch", &PyTrainer::run_epoch)
      .def("train", &PyTrainer::train, "Trains to max_epochs or early stop; returns one dict per epoch.")
      .def("evaluate", &PyTrainer::evaluate, "split"_a = "test", "use_best"_a = true)
      .def("pooling_weights", &PyTrainer::pooling_weights)
      .def("constraints", &PyTrainer::constraints)
      .def("scores", &PyTrainer::scores, "s"_a, "r"_a, "t"_a)
      .def("save", &PyTrainer::save, "path"_a)
      .def_property_readonly("epoch", &PyTrainer::epoch)
      .def_property_readonly("step", &PyTrainer::step);

  m.def(
      "synthesize",
      [](const std::string& pattern, std::size_t entities, std::size_t relations, std::size_t timestamps,
         std::uint64_t seed) {
        const auto s = data::generate_synthetic({entities, relations, timestamps, data::parse_pattern(pattern), seed});
        return py::dict("train"_a = split_list(s.train), "valid"_a = split_list(s.valid), "test"_a = split_list(s.test));
      },
      "pattern"_a = "ring", "entities"_a = 20, "relations"_a = 2, "timestamps"_a = 4, "seed"_a = 7);

  m.def(
      "train",
      [](const train::TrainConfig& config, const std::filesystem::path& out) {
        const auto s = train::run_training(config, out);
        return py::dict("valid"_a = report_dict(s.valid), "test"_a = report_dict(s.test),
                        "epochs"_a = s.state.epoch, "best_epoch"_a = s.state.best_epoch);
      },
      "config"_a, "out"_a, "Trains and writes checkpoint.bin, manifest.txt, metrics.csv and report.csv.");

  m.def(
      "gradcheck",
      [](const train::TrainConfig& config) {
        const auto r = train::gradient_suite(config);
        py::dict terms;
        for (const auto& t : r.terms) terms[py::str(std::string(t.term))] = t.report.max_rel_error;
        return py::dict("passed"_a = r.passed, "max_rel_error"_a = terms);
      },
      "config"_a);

  m.def(
      "pooling_weights",
      [](const std::filesystem::path& checkpoint) {
        return model::pooling_weight_values(train::load_checkpoint(checkpoint).best_params);
      },
      "checkpoint"_a);

  m.def(
      "cmd",
      [](const Array& x, const Array& y, int order, double a, double b) {
        diff::Graph g;
        return loss::cmd(g.constant(to_tensor(x)), g.constant(to_tensor(y)), order, a, b).value().item();
      },
      "x"_a, "y"_a, "order"_a = 5, "a"_a = 0.0, "b"_a = 1.0);

  m.def(
      "pool",
      [](const std::vector<Array>& features, const std::string& mode, std::optional<std::vector<double>> psi) {
        diff::Graph g;
        std::vector<diff::Var> vars;
        for (const auto& f : features) vars.push_back(g.constant(to_tensor(f)));
        std::optional<diff::Var> w;
        if (psi) w = g.constant(diff::Tensor({1, psi->size()}, *psi));
        return to_array(model::pool(vars, model::parse_pool_mode(mode), w ? &*w : nullptr).value());
      },
      "features"_a, "mode"_a = "amp", "psi"_a = py::none());

  m.def(
      "filtered_rank",
      [](const std::vector<double>& scores, std::size_t target, std::vector<std::size_t> true_tails) {
        std::sort(true_tails.begin(), true_tails.end());
        return eval::rank_from_scores(scores, target, true_tails);
      },
      "scores"_a, "target"_a, "true_tails"_a = std::vector<std::size_t>{});
}
