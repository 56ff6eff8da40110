#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ulab/checkpoint.hpp"
#include "ulab/datakit.hpp"
#include "ulab/evalkit.hpp"
#include "ulab/harness.hpp"
#include "ulab/model.hpp"
#include "ulab/refdist.hpp"
#include "ulab/training.hpp"
#include "ulab/unlearners.hpp"

namespace py = pybind11;
using namespace ulab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

LossSpec make_loss(const std::string& kind, std::optional<std::vector<double>> q, double l1) {
    LossSpec s;
    if (kind == "ce_hard") s = LossSpec::hard(l1);
    else if (kind == "neg_ce_hard") s = LossSpec::negated_hard();
    else if (kind == "ce_soft" || kind == "kl_to_target") {
        if (!q) throw ConfigError(kind + " needs a target distribution q");
        s = kind == "ce_soft" ? LossSpec::soft(ProbVector(*q)) : LossSpec::kl(ProbVector(*q));
    } else {
        throw ConfigError("unknown loss kind '" + kind + "'");
    }
    return s;
}

py::dict report_to_dict(const MetricsReport& r) {
    py::dict d;
    d["method"] = r.method;
    d["seed"] = r.seed;
    d["w"] = r.w;
    const auto names = metric_names();
    const auto vals = metric_values(r);
    for (std::size_t i = 0; i < names.size(); ++i) d[py::str(names[i])] = vals[i];
    return d;
}

MetricsReport dict_to_report(const py::dict& d) {
    MetricsReport r;
    std::vector<double> vals;
    for (const auto& n : metric_names()) vals.push_back(d.contains(n) ? d[py::str(n)].cast<double>() : 0.0);
    set_metric_values(r, vals);
    return r;
}

}  // namespace

PYBIND11_MODULE(_ulab, m) {
    m.doc() = "Reference-guided unlearning laboratory: models, data, RefDist, unlearners and metrics";

    auto base = py::register_exception<Error>(m, "UlabError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<LabelError>(m, "LabelError", base.ptr());
    py::register_exception<EmptyBatchError>(m, "EmptyBatchError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<SplitError>(m, "SplitError", base.ptr());
    py::register_exception<CoverageError>(m, "CoverageError", base.ptr());
    py::register_exception<IngestionError>(m, "IngestionError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    // -- models -------------------------------------------------------------
    py::class_<ArchitectureSpec>(m, "ArchitectureSpec")
        .def(py::init([](const std::string& kind, std::size_t input_dim, std::size_t hidden_dim,
                         std::size_t num_classes, const std::string& activation) {
                 ArchitectureSpec a{parse_arch_kind(kind), input_dim, hidden_dim, num_classes,
                                    parse_activation(activation)};
                 a.validate();
                 return a;
             }),
             py::arg("kind"), py::arg("input_dim"), py::arg("hidden_dim") = 0, py::arg("num_classes") = 2,
             py::arg("activation") = "tanh")
        .def_property_readonly("kind", [](const ArchitectureSpec& a) { return to_string(a.kind); })
        .def_property_readonly("activation", [](const ArchitectureSpec& a) { return to_string(a.activation); })
        .def_readonly("input_dim", &ArchitectureSpec::input_dim)
        .def_readonly("hidden_dim", &ArchitectureSpec::hidden_dim)
        .def_readonly("num_classes", &ArchitectureSpec::num_classes)
        .def("param_count", &ArchitectureSpec::param_count);

    py::class_<Model>(m, "Model")
        .def_static("initialize", &Model::initialize, py::arg("arch"), py::arg("seed"))
        .def_static("zeros", &Model::zeros, py::arg("arch"))
        .def_readonly("arch", &Model::arch)
        .def_property(
            "theta", [](const Model& md) { return to_array(md.theta); },
            [](Model& md, const Array& t) {
                if (t.ndim() != 1 || static_cast<std::size_t>(t.size()) != md.arch.param_count()) {
                    throw ShapeError("theta length must equal the parameter count");
                }
                md.theta.assign(t.data(), t.data() + t.size());
            })
        .def("copy", [](const Model& md) { return Model(md); })
        .def("__eq__", [](const Model& a, const Model& b) { return a == b; });

    m.def("forward_probs", [](const Model& md, const Array& x) { return to_array(forward_probs_matrix(md, to_matrix(x))); },
          py::arg("model"), py::arg("x"));
    m.def("forward_logits", [](const Model& md, const Array& x) { return to_array(forward_logits(md, to_matrix(x))); },
          py::arg("model"), py::arg("x"));
    m.def(
        "loss_and_grad",
        [](const Model& md, const Array& x, std::vector<int> y, const std::string& kind,
           std::optional<std::vector<double>> q, double l1) {
            const LossGrad lg = loss_and_grad(md, to_matrix(x), y, make_loss(kind, std::move(q), l1));
            return py::make_tuple(lg.loss, to_array(lg.grad));
        },
        py::arg("model"), py::arg("x"), py::arg("labels") = std::vector<int>{}, py::arg("kind") = "ce_hard",
        py::arg("q") = py::none(), py::arg("l1") = 0.0);
    m.def(
        "sgd_step",
        [](const Model& md, const Array& grad, double lr, double momentum, std::optional<std::vector<double>> velocity) {
            OptState opt = OptState::fresh(lr, momentum, md.theta.size());
            if (velocity) opt.velocity = *velocity;
            auto [next, state] = sgd_step(md, std::vector<double>(grad.data(), grad.data() + grad.size()), opt);
            return py::make_tuple(next, to_array(state.velocity));
        },
        py::arg("model"), py::arg("grad"), py::arg("lr"), py::arg("momentum") = 0.0, py::arg("velocity") = py::none());
    m.def("kl_divergence", [](std::vector<double> q, std::vector<double> p) {
        return kl_divergence(ProbVector(std::move(q)), ProbVector(std::move(p)));
    });
    m.def(
        "train",
        [](const Model& md, const Dataset& data, std::vector<std::size_t> idx, std::size_t epochs,
           std::size_t batch_size, double lr, double momentum, std::uint64_t seed, double l1) {
            return train(md, data, idx, {epochs, batch_size, lr, momentum, seed, l1});
        },
        py::arg("model"), py::arg("data"), py::arg("indices"), py::arg("epochs") = 10, py::arg("batch_size") = 64,
        py::arg("lr") = 0.05, py::arg("momentum") = 0.9, py::arg("seed") = 0, py::arg("l1") = 0.0);
    m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    // -- data ---------------------------------------------------------------
    py::class_<Dataset>(m, "Dataset")
        .def(py::init([](const Array& x, std::vector<int> y, std::size_t k) {
                 Dataset d{to_matrix(x), std::move(y), k};
                 d.validate();
                 return d;
             }),
             py::arg("features"), py::arg("labels"), py::arg("num_classes"))
        .def_property_readonly("features", [](const Dataset& d) { return to_array(d.features); })
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def("__len__", &Dataset::size)
        .def("dim", &Dataset::dim);

    py::class_<DataSplits>(m, "DataSplits")
        .def_readonly("held_out", &DataSplits::held_out)
        .def_readonly("retain", &DataSplits::retain)
        .def_readonly("forget", &DataSplits::forget)
        .def_readonly("validation", &DataSplits::validation)
        .def_readonly("test", &DataSplits::test)
        .def("train_indices", &DataSplits::train_indices);

    m.def(
        "generate_gaussian_mixture",
        [](std::size_t k, std::size_t d, std::size_t per_class, double scale, double sigma, std::uint64_t seed,
           std::optional<std::uint64_t> sample_seed) {
            const GenSpec g{k, d, per_class, scale, sigma, seed};
            return sample_seed ? generate_gaussian_mixture(g, *sample_seed) : generate_gaussian_mixture(g);
        },
        py::arg("num_classes") = 10, py::arg("input_dim") = 32, py::arg("samples_per_class") = 600,
        py::arg("centroid_scale") = 3.0, py::arg("noise_sigma") = 1.5, py::arg("seed") = 0,
        py::arg("sample_seed") = py::none());
    m.def("make_splits", &make_splits, py::arg("pool"), py::arg("test"), py::arg("forget_fraction"), py::arg("seed"));
    m.def("load_csv", [](const std::filesystem::path& p, bool header) { return load_csv(p, {header}); },
          py::arg("path"), py::arg("header") = false);
    m.def("write_csv", &write_csv, py::arg("data"), py::arg("path"), py::arg("header") = false);

    // -- refdist ------------------------------------------------------------
    m.def(
        "match_histogram",
        [](std::vector<std::size_t> counts, std::size_t b, std::size_t mm) {
            return match_histogram(ClassHistogram{std::move(counts)}, b, mm);
        },
        py::arg("counts"), py::arg("b"), py::arg("m"));
    m.def(
        "build_refdist",
        [](std::vector<int> labels, const Dataset& pool, std::vector<std::size_t> held_out, const Model& ref,
           std::size_t mm, std::uint64_t seed) {
            const ReferencePool rp(pool, held_out);
            return to_array(build_refdist(labels, rp, ref, RefDistConfig{mm, seed}).probs);
        },
        py::arg("forget_labels"), py::arg("pool"), py::arg("held_out"), py::arg("reference"), py::arg("m") = 0,
        py::arg("seed") = 0);

    // -- unlearners ---------------------------------------------------------
    py::class_<UnlearnConfig>(m, "UnlearnConfig")
        .def(py::init([](const std::string& method, double w, double lr, double momentum,
                         std::optional<std::size_t> epochs, std::size_t batch_size, std::size_t retain_batch_size,
                         std::size_t mm, double gamma, std::uint64_t seed) {
                 UnlearnConfig c = UnlearnConfig::defaults(parse_method(method));
                 c.w = w;
                 c.lr = lr;
                 c.momentum = momentum;
                 if (epochs) c.epochs = *epochs;
                 c.batch_size = batch_size;
                 c.retain_batch_size = retain_batch_size;
                 c.m = mm;
                 c.gamma = gamma;
                 c.seed = seed;
                 c.validate();
                 return c;
             }),
             py::arg("method") = "regun", py::arg("w") = 0.5, py::arg("lr") = 0.01, py::arg("momentum") = 0.9,
             py::arg("epochs") = py::none(), py::arg("batch_size") = 64, py::arg("retain_batch_size") = 0,
             py::arg("m") = 0, py::arg("gamma") = 0.0, py::arg("seed") = 0)
        .def_property_readonly("method", [](const UnlearnConfig& c) { return to_string(c.method); })
        .def_readwrite("w", &UnlearnConfig::w)
        .def_readwrite("lr", &UnlearnConfig::lr)
        .def_readwrite("epochs", &UnlearnConfig::epochs)
        .def_readwrite("seed", &UnlearnConfig::seed);
    m.def(
        "unlearn",
        [](const Model& md, const DataSplits& s, const Dataset& pool, const UnlearnConfig& c) {
            py::gil_scoped_release nogil;
            return unlearn(md, s, pool, c);
        },
        py::arg("model"), py::arg("splits"), py::arg("pool"), py::arg("config"));

    // -- evaluation ---------------------------------------------------------
    m.def("accuracy", [](const Model& md, const Array& x, std::vector<int> y) { return accuracy(md, to_matrix(x), y); },
          py::arg("model"), py::arg("x"), py::arg("labels"));
    m.def("smia_scores", [](const Model& md, const Array& x, std::vector<int> y) { return to_array(smia_scores(md, to_matrix(x), y)); },
          py::arg("model"), py::arg("x"), py::arg("labels"));
    m.def(
        "rmia_lite_scores",
        [](const Model& t, const std::vector<Model>& refs, const Array& x, std::vector<int> y) {
            return to_array(rmia_lite_scores(t, refs, to_matrix(x), y));
        },
        py::arg("target"), py::arg("references"), py::arg("x"), py::arg("labels"));
    m.def(
        "attack_auc",
        [](std::vector<double> members, std::vector<double> nonmembers) {
            return attack_auc({std::move(members), std::move(nonmembers)});
        },
        py::arg("members"), py::arg("nonmembers"));
    m.def("js_divergence", [](std::vector<double> p, std::vector<double> q) { return js_divergence(p, q); });
    m.def("js_divergence_avg", [](const Model& a, const Model& b, const Array& x) { return js_divergence_avg(a, b, to_matrix(x)); });
    m.def(
        "gap_report",
        [](const py::dict& method, const py::dict& retrain) {
            const Gaps g = gap_report(dict_to_report(method), dict_to_report(retrain));
            return py::make_tuple(g.rftp, g.tp);
        },
        py::arg("method"), py::arg("retrain"),
        "Returns (gap_rftp, gap_tp) from dicts with retain_acc, forget_acc, test_acc and rmia_auc.");
    m.def("metric_names", &metric_names);

    // -- harness ------------------------------------------------------------
    m.def("default_config", [] { return config_to_json(ExperimentConfig::defaults()).dump(); },
          "Default experiment config as a JSON string.");
    m.def(
        "run_experiment",
        [](const std::string& config_json, std::optional<std::filesystem::path> out, bool sweep) {
            ExperimentConfig cfg = config_from_json(nlohmann::json::parse(config_json));
            if (out) cfg.output_dir = *out;
            ExperimentResult res;
            {
                py::gil_scoped_release nogil;
                res = run_experiment(cfg, RunOptions{sweep});
                write_report(cfg, res, cfg.output_dir);
            }
            py::list rows;
            for (const auto& r : res.table) rows.append(report_to_dict(r));
            return rows;
        },
        py::arg("config_json"), py::arg("output_dir") = py::none(), py::arg("sweep") = true,
        "Runs the full protocol, writes the report files and returns the per-seed table rows.");
}
