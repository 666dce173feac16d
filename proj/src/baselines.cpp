#include "cpr/baselines.hpp"

#include "cpr/model.hpp"

namespace cpr {

std::string orthoreg_mode_name(OrthoregMode mode) {
    return mode == OrthoregMode::BothSigns ? "both-signs" : "positive-only";
}

OrthoregMode orthoreg_mode_from_name(const std::string& name) {
    if (name == "both-signs") return OrthoregMode::BothSigns;
    if (name == "positive-only") return OrthoregMode::PositiveOnly;
    throw ConfigError("unknown orthoreg mode: " + name);
}

DecovResult decov_loss(const Matrix& batch_features) {
    const std::size_t n = batch_features.rows();
    const std::size_t d = batch_features.cols();
    if (n < 2) {
        throw BatchTooSmallError("decov_loss: need at least two samples, got " +
                                 std::to_string(n));
    }
    Vector mu(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            mu[j] += batch_features(i, j);
        }
    }
    for (double& m : mu) m /= static_cast<double>(n);

    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            centered(i, j) = batch_features(i, j) - mu[j];
        }
    }
    Matrix cov = matmul_transpose_a(centered, centered);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& x : cov.data()) x *= inv_n;

    DecovResult res;
    res.loss = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            res.loss += 0.5 * cov(i, j) * cov(i, j);
        }
    }
    // dL/dh_n = (2/n) * C_offdiag * (h_n - mu): the centering terms cancel
    // because the centered columns sum to zero.
    Matrix cov_off = cov;
    for (std::size_t i = 0; i < d; ++i) cov_off(i, i) = 0.0;
    res.d_features = matmul_transpose_b(centered, cov_off);
    const double scale = 2.0 * inv_n;
    for (double& x : res.d_features.data()) x *= scale;
    return res;
}

OrthoregResult orthoreg_cost(const Matrix& weight_rows, OrthoregMode mode) {
    const std::size_t n = weight_rows.rows();
    const std::size_t d = weight_rows.cols();
    std::vector<Vector> rows(n), units(n);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = weight_rows.row(i);
        norms[i] = norm(rows[i]);
        if (!(norms[i] > kEpsNorm)) {
            throw ZeroNormError("orthoreg_cost: zero-norm weight row " + std::to_string(i));
        }
        units[i] = normalize(rows[i]);
    }
    OrthoregResult res;
    res.loss = 0.0;
    Matrix d_unit(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double cs = dot(units[i], units[j]);
            if (mode == OrthoregMode::PositiveOnly && cs < 0.0) continue;
            res.loss += cs * cs;  // 0.5 * 2 ordered pairs
            d_unit.axpy_row(i, units[j], 2.0 * cs);
            d_unit.axpy_row(j, units[i], 2.0 * cs);
        }
    }
    res.d_weights = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        res.d_weights.set_row(i, normalize_pullback(rows[i], d_unit.row(i)));
    }
    return res;
}

SquentropyResult squentropy_loss(const Vector& logits, std::size_t label) {
    const std::size_t K = logits.size();
    if (K < 2) {
        throw InvalidParamError("squentropy_loss: need at least two classes");
    }
    if (label >= K) {
        throw LabelOutOfRangeError("squentropy_loss: label " + std::to_string(label));
    }
    const CrossEntropyResult ce = cross_entropy(logits, label);
    SquentropyResult res;
    res.ce_part = ce.loss;
    res.d_logits = ce.d_logits;
    res.penalty_part = 0.0;
    const double scale = 1.0 / static_cast<double>(K - 1);
    for (std::size_t i = 0; i < K; ++i) {
        if (i == label) continue;
        res.penalty_part += scale * logits[i] * logits[i];
        res.d_logits[i] += 2.0 * scale * logits[i];
    }
    res.loss = res.ce_part + res.penalty_part;
    return res;
}

}  // namespace cpr
