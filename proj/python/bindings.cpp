#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cpr/baselines.hpp"
#include "cpr/cli.hpp"
#include "cpr/covariance.hpp"
#include "cpr/data.hpp"
#include "cpr/model.hpp"
#include "cpr/numerics.hpp"
#include "cpr/prototypes.hpp"
#include "cpr/trainer.hpp"

namespace py = pybind11;
using cpr::Matrix;
using cpr::Vector;

namespace {

Matrix to_matrix(const std::vector<Vector>& rows) {
    if (rows.empty()) {
        throw cpr::EmptyInputError("matrix argument needs at least one row");
    }
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols()) {
            throw cpr::DimensionMismatchError("ragged matrix argument");
        }
        m.set_row(i, rows[i]);
    }
    return m;
}

std::vector<Vector> to_rows(const Matrix& m) {
    std::vector<Vector> rows(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        rows[i] = m.row(i);
    }
    return rows;
}

cpr::PrototypeSet make_prototype_set(const std::vector<Vector>& prototypes) {
    cpr::PrototypeSet proto;
    proto.values = to_matrix(prototypes);
    proto.grad = Matrix(proto.values.rows(), proto.values.cols());
    proto.counts.assign(proto.values.rows(), 0);
    proto.initialized = true;
    return proto;
}

cpr::CovLossConfig make_cov_config(int nu, int r_max, const std::string& pad_mode,
                                   const std::string& sort_order) {
    cpr::CovLossConfig cfg;
    cfg.nu = nu;
    cfg.r_max = r_max;
    if (pad_mode == "fixed") {
        cfg.pad_mode = cpr::PadMode::Fixed;
    } else if (pad_mode == "uniform") {
        cfg.pad_mode = cpr::PadMode::Uniform;
    } else {
        throw cpr::ConfigError("pad_mode must be 'fixed' or 'uniform'");
    }
    if (sort_order == "descending") {
        cfg.sort_order = cpr::SortOrder::Descending;
    } else if (sort_order == "ascending") {
        cfg.sort_order = cpr::SortOrder::Ascending;
    } else {
        throw cpr::ConfigError("sort_order must be 'ascending' or 'descending'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cprlab core operations";

    py::register_exception<cpr::Error>(m, "CprError");

    m.def("normalize", &cpr::normalize, py::arg("v"), "Scale a vector to unit L2 norm.");
    m.def("cosine_similarity", &cpr::cosine_similarity, py::arg("v"), py::arg("u"),
          "Cosine similarity clamped to [-1, 1].");
    m.def(
        "sort_with_permutation",
        [](const Vector& v, const std::string& order) {
            const cpr::SortResult res = cpr::sort_with_permutation(
                v, order == "ascending" ? cpr::SortOrder::Ascending
                                        : cpr::SortOrder::Descending);
            return py::make_tuple(res.sorted, res.perm);
        },
        py::arg("v"), py::arg("order") = "descending",
        "Stable sort returning (sorted, perm) where perm[i] is the sorted "
        "position of input element i.");
    m.def("normalize_pullback", &cpr::normalize_pullback, py::arg("v"), py::arg("d_unit"),
          "Pull a gradient w.r.t. v/|v| back to a gradient w.r.t. v.");

    m.def(
        "cross_entropy",
        [](const Vector& logits, std::size_t label) {
            const cpr::CrossEntropyResult res = cpr::cross_entropy(logits, label);
            return py::make_tuple(res.loss, res.d_logits);
        },
        py::arg("logits"), py::arg("label"));
    m.def("softmax", &cpr::softmax, py::arg("logits"));
    m.def(
        "cosine_lr",
        [](double lr0, std::size_t epoch, std::size_t total_epochs) {
            cpr::OptimState opt;
            opt.lr0 = lr0;
            opt.total_epochs = total_epochs;
            return cpr::lr_at(opt, epoch);
        },
        py::arg("lr0"), py::arg("epoch"), py::arg("total_epochs"));

    m.def(
        "proto_loss",
        [](const Vector& v, const Vector& p, bool normalized) {
            const cpr::ProtoLossResult res = cpr::proto_loss_pair(
                v, p,
                normalized ? cpr::ProtoLossForm::Normalized
                           : cpr::ProtoLossForm::Unnormalized);
            return py::make_tuple(res.loss, res.d_feature, res.d_prototype);
        },
        py::arg("v"), py::arg("p"), py::arg("normalized") = true,
        "Squared distance between (normalized) feature and prototype with "
        "gradients w.r.t. both arguments.");
    m.def(
        "dissimilarity",
        [](const std::vector<Vector>& prototypes, std::size_t k) {
            return cpr::dissimilarity(make_prototype_set(prototypes), k);
        },
        py::arg("prototypes"), py::arg("k"));
    m.def(
        "cs_loss",
        [](const std::vector<Vector>& prototypes) {
            const cpr::CsLossResult res = cpr::cs_loss(make_prototype_set(prototypes));
            return py::make_tuple(res.loss, to_rows(res.d_unit));
        },
        py::arg("prototypes"),
        "Mean squared cosine similarity over ordered prototype pairs.");

    m.def("delta_vector", &cpr::delta_vector, py::arg("v_hat"), py::arg("p_hat"));
    m.def(
        "cov_loss",
        [](const Vector& v, const Vector& p, int nu, int r) {
            cpr::CovLossConfig cfg = make_cov_config(nu, r, "fixed", "descending");
            const cpr::CovLossResult res = cpr::cov_loss_pair(v, p, cfg, r);
            return py::make_tuple(res.loss, res.d_unit_feature, res.pad_radius);
        },
        py::arg("v"), py::arg("p"), py::arg("nu") = -1, py::arg("r") = 10,
        "Sorted-and-shifted covariance loss with a fixed pad radius.");
    m.def(
        "cov_loss_random_pad",
        [](const Vector& v, const Vector& p, int nu, int r_max, std::uint64_t seed) {
            cpr::CovLossConfig cfg = make_cov_config(nu, r_max, "uniform", "descending");
            cpr::SeededRng rng(seed);
            cpr::PrototypeSet proto = make_prototype_set({p});
            const cpr::CovLossResult res = cpr::cov_loss_single(v, proto, 0, cfg, rng);
            return py::make_tuple(res.loss, res.d_unit_feature, res.pad_radius);
        },
        py::arg("v"), py::arg("p"), py::arg("nu") = -1, py::arg("r_max") = 10,
        py::arg("seed") = 0);
    m.def(
        "cov_matrix_oracle",
        [](const std::vector<Vector>& features, const Vector& p) {
            return to_rows(cpr::cov_matrix_oracle(to_matrix(features), p));
        },
        py::arg("features"), py::arg("p"),
        "Exact population covariance of the prototype-weighted products.");
    m.def(
        "cpr_metric",
        [](const std::vector<Vector>& s, double ds) {
            return cpr::cpr_metric(to_matrix(s), ds);
        },
        py::arg("s"), py::arg("ds"));
    m.def("chebyshev_two_sided", &cpr::chebyshev_two_sided, py::arg("sum_s"), py::arg("ds"));
    m.def("cantelli_one_sided", &cpr::cantelli_one_sided, py::arg("sum_s"), py::arg("ds"));
    m.def(
        "empirical_tail_probability",
        [](const std::vector<Vector>& features, const Vector& p, double ds,
           const std::string& tail) {
            return cpr::empirical_tail_probability(
                to_matrix(features), p, ds,
                tail == "lower" ? cpr::Tail::Lower : cpr::Tail::TwoSided);
        },
        py::arg("features"), py::arg("p"), py::arg("ds"), py::arg("tail") = "two_sided");

    m.def(
        "decov_loss",
        [](const std::vector<Vector>& batch_features) {
            const cpr::DecovResult res = cpr::decov_loss(to_matrix(batch_features));
            return py::make_tuple(res.loss, to_rows(res.d_features));
        },
        py::arg("batch_features"));
    m.def(
        "orthoreg_cost",
        [](const std::vector<Vector>& weight_rows, const std::string& mode) {
            const cpr::OrthoregResult res = cpr::orthoreg_cost(
                to_matrix(weight_rows), cpr::orthoreg_mode_from_name(mode));
            return py::make_tuple(res.loss, to_rows(res.d_weights));
        },
        py::arg("weight_rows"), py::arg("mode") = "both-signs");
    m.def(
        "squentropy_loss",
        [](const Vector& logits, std::size_t label) {
            const cpr::SquentropyResult res = cpr::squentropy_loss(logits, label);
            return py::make_tuple(res.loss, res.d_logits);
        },
        py::arg("logits"), py::arg("label"));

    m.def(
        "generate_blobs",
        [](std::size_t classes, std::size_t dim, std::size_t n_per_class, double spread,
           double overlap, std::uint64_t seed, double label_noise) {
            const cpr::Dataset data = cpr::generate_blobs(classes, dim, n_per_class, spread,
                                                          overlap, seed, label_noise);
            return py::make_tuple(to_rows(data.inputs), data.labels);
        },
        py::arg("classes"), py::arg("dim"), py::arg("n_per_class"),
        py::arg("spread") = 0.9, py::arg("overlap") = 0.0, py::arg("seed") = 0,
        py::arg("label_noise") = 0.0);
    m.def(
        "stratified_subsets",
        [](const std::vector<int>& labels, std::size_t num_classes, std::size_t draws,
           double fraction, std::uint64_t seed) {
            cpr::Dataset data;
            data.inputs = Matrix(labels.size(), 1);
            data.labels = labels;
            data.num_classes = num_classes;
            return cpr::stratified_subsets(data, draws, fraction, seed).subsets;
        },
        py::arg("labels"), py::arg("num_classes"), py::arg("draws"), py::arg("fraction"),
        py::arg("seed") = 0,
        "Index lists of stratified subsets, one per draw.");

    m.def(
        "cli_main",
        [](const std::vector<std::string>& args) { return cpr::run_cli(args); },
        py::arg("args"),
        "Invoke the cprlab command line (train/suite/bounds/report/bench-cov).");
}
