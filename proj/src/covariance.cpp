#include "cpr/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace cpr {

namespace {

// Monotone map from double to uint64 so integer order matches float order.
inline std::uint64_t order_key(double x, bool descending) {
    std::uint64_t u;
    std::memcpy(&u, &x, sizeof(u));
    u = (u & 0x8000000000000000ULL) ? ~u : (u | 0x8000000000000000ULL);
    return descending ? ~u : u;
}

// Stable LSD radix argsort. Ties keep their original index order, matching
// a stable comparison sort. Scratch buffers persist per thread: the per-call
// allocations would otherwise dominate at large J.
void radix_argsort(const Vector& values, bool descending, std::vector<std::uint32_t>& out) {
    const std::size_t n = values.size();
    static thread_local std::vector<std::uint64_t> keys, keys_tmp;
    static thread_local std::vector<std::uint32_t> idx_tmp;
    keys.resize(n);
    keys_tmp.resize(n);
    idx_tmp.resize(n);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        keys[i] = order_key(values[i], descending);
        out[i] = static_cast<std::uint32_t>(i);
    }
    std::uint32_t count[256];
    for (int pass = 0; pass < 8; ++pass) {
        const int shift = pass * 8;
        std::memset(count, 0, sizeof(count));
        for (std::size_t i = 0; i < n; ++i) {
            count[(keys[i] >> shift) & 0xFF]++;
        }
        std::uint32_t running = 0;
        for (std::uint32_t& c : count) {
            const std::uint32_t here = c;
            c = running;
            running += here;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t pos = count[(keys[i] >> shift) & 0xFF]++;
            keys_tmp[pos] = keys[i];
            idx_tmp[pos] = out[i];
        }
        keys.swap(keys_tmp);
        out.swap(idx_tmp);
    }
}

void argsort(const Vector& values, bool descending, std::vector<std::uint32_t>& out) {
    const std::size_t n = values.size();
    if (n >= 256) {
        radix_argsort(values, descending, out);
        return;
    }
    out.resize(n);
    std::iota(out.begin(), out.end(), 0u);
    if (descending) {
        std::sort(out.begin(), out.end(), [&](std::uint32_t a, std::uint32_t b) {
            return values[a] > values[b] || (values[a] == values[b] && a < b);
        });
    } else {
        std::sort(out.begin(), out.end(), [&](std::uint32_t a, std::uint32_t b) {
            return values[a] < values[b] || (values[a] == values[b] && a < b);
        });
    }
}

}  // namespace

void CovLossConfig::validate() const {
    if (nu != -1 && nu != 0 && nu != 1) {
        throw InvalidNuError("nu must be -1, 0, or 1; got " + std::to_string(nu));
    }
    if (r_max < 1) {
        throw InvalidParamError("r_max must be >= 1; got " + std::to_string(r_max));
    }
}

Vector delta_vector(const Vector& v_hat, const Vector& p_hat) {
    if (v_hat.size() != p_hat.size()) {
        throw DimensionMismatchError("delta_vector: lengths differ");
    }
    Vector delta(v_hat.size());
    for (std::size_t j = 0; j < v_hat.size(); ++j) {
        delta[j] = p_hat[j] * (v_hat[j] - p_hat[j]);
    }
    return delta;
}

CovLossResult cov_loss_pair(const Vector& v, const Vector& p, const CovLossConfig& cfg, int r) {
    cfg.validate();
    if (r < 1) {
        throw InvalidParamError("pad radius must be >= 1");
    }
    if (v.size() != p.size()) {
        throw DimensionMismatchError("cov_loss: feature/prototype lengths differ");
    }
    const std::size_t J = v.size();
    const double nv = norm(v);
    const double np = norm(p);
    if (!(nv > kEpsNorm) || !(np > kEpsNorm)) {
        throw ZeroNormError("cov_loss: zero-norm input");
    }

    // Scratch persists per thread; fresh heap blocks per call would dominate
    // the runtime at large J.
    static thread_local Vector v_hat, p_hat, delta, d_delta;
    static thread_local std::vector<std::uint32_t> idx;
    v_hat.resize(J);
    p_hat.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
        v_hat[j] = v[j] / nv;
        p_hat[j] = p[j] / np;
    }

    // Sort the prototype, carry the feature vector along by the same indices.
    argsort(p_hat, cfg.sort_order == SortOrder::Descending, idx);
    delta.resize(J);
    for (std::size_t s = 0; s < J; ++s) {
        const double ph = p_hat[idx[s]];
        delta[s] = ph * (v_hat[idx[s]] - ph);
    }

    // Left/right zero padding by r makes entry i of the padded product equal
    // to delta[i - r] * delta[i]; only i in [r, J) can be nonzero.
    const double denom = static_cast<double>(J + static_cast<std::size_t>(r));
    double pos_sum = 0.0;
    double neg_sum = 0.0;
    d_delta.assign(J, 0.0);
    const std::size_t lag = static_cast<std::size_t>(r);
    for (std::size_t i = lag; i < J; ++i) {
        const double z = delta[i - lag] * delta[i];
        double fprime;  // d filter(z) / dz for the active filter
        if (z > 0.0) {
            pos_sum += z;
            fprime = (cfg.nu == 0) ? 1.0 : (cfg.nu == 1 ? 1.0 : 0.0);
        } else if (z < 0.0) {
            neg_sum += -z;
            fprime = (cfg.nu == 0) ? -1.0 : (cfg.nu == -1 ? -1.0 : 0.0);
        } else {
            fprime = 0.0;
        }
        if (fprime != 0.0) {
            d_delta[i - lag] += fprime * delta[i];
            d_delta[i] += fprime * delta[i - lag];
        }
    }

    CovLossResult res;
    res.pad_radius = r;
    const double pos_scaled = pos_sum / denom;
    const double neg_scaled = neg_sum / denom;
    switch (cfg.nu) {
        case 0: res.loss = pos_scaled + neg_scaled; break;
        case 1: res.loss = pos_scaled; break;
        default: res.loss = neg_scaled; break;
    }

    // d delta[s] / d v_hat_sorted[s] = p_hat_sorted[s]; undo the permutation.
    res.d_unit_feature.assign(J, 0.0);
    for (std::size_t s = 0; s < J; ++s) {
        res.d_unit_feature[idx[s]] = p_hat[idx[s]] * d_delta[s] / denom;
    }
    return res;
}

CovLossResult cov_loss_single(const Vector& v, const PrototypeSet& proto, std::size_t label,
                              const CovLossConfig& cfg, SeededRng& rng) {
    cfg.validate();
    if (label >= proto.num_classes()) {
        throw LabelOutOfRangeError("cov_loss_single: label " + std::to_string(label));
    }
    int r = cfg.r_max;
    if (cfg.pad_mode == PadMode::Uniform) {
        r = static_cast<int>(rng.uniform_int(1, cfg.r_max));
    }
    return cov_loss_pair(v, proto.prototype(label), cfg, r);
}

CovMatrix cov_matrix_oracle(const Matrix& features, const Vector& p) {
    const std::size_t n = features.rows();
    const std::size_t J = features.cols();
    if (n == 0) {
        throw EmptyInputError("cov_matrix_oracle: no samples");
    }
    if (J != p.size()) {
        throw DimensionMismatchError("cov_matrix_oracle: widths differ");
    }
    const Vector p_hat = normalize(p);

    // Product vectors a_n = v_hat_n ⊙ p_hat and their mean.
    Matrix products(n, J);
    Vector mean(J, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector v_hat = normalize(features.row(i));
        for (std::size_t j = 0; j < J; ++j) {
            const double a = v_hat[j] * p_hat[j];
            products(i, j) = a;
            mean[j] += a;
        }
    }
    for (double& m : mean) m /= static_cast<double>(n);

    CovMatrix s(J, J);
    Vector dev(J);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < J; ++j) {
            dev[j] = products(i, j) - mean[j];
        }
        for (std::size_t a = 0; a < J; ++a) {
            const double da = dev[a];
            double* row = &s.data()[a * J];
            for (std::size_t b = 0; b < J; ++b) {
                row[b] += da * dev[b];
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& x : s.data()) x *= inv_n;
    return s;
}

double ones_quadratic_form(const CovMatrix& s) {
    double total = 0.0;
    for (const double x : s.data()) total += x;
    return total;
}

double cpr_metric(const CovMatrix& s, double ds) {
    return chebyshev_two_sided(ones_quadratic_form(s), ds);
}

double chebyshev_two_sided(double sum_s, double ds) {
    if (!(ds > 0.0)) {
        throw DegenerateDissimilarityError("two-sided bound needs DS > 0");
    }
    if (sum_s < 0.0) {
        throw InvalidParamError("chebyshev_two_sided: negative 1^T S 1");
    }
    return sum_s / (ds * ds);
}

double cantelli_one_sided(double sum_s, double ds) {
    if (!(ds > 0.0)) {
        throw DegenerateDissimilarityError("one-sided bound needs DS > 0");
    }
    if (sum_s < 0.0) {
        throw InvalidParamError("cantelli_one_sided: negative 1^T S 1");
    }
    return sum_s / (sum_s + ds * ds);
}

double empirical_tail_probability(const Matrix& features, const Vector& p, double ds,
                                  Tail tail) {
    const std::size_t n = features.rows();
    if (n < 2) {
        throw EmptyInputError("empirical_tail_probability: need at least two samples");
    }
    const Vector p_hat = normalize(p);
    Vector cs(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cs[i] = cosine_similarity(features.row(i), p_hat);
        mean += cs[i];
    }
    mean /= static_cast<double>(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dev = cs[i] - mean;
        const bool hit = (tail == Tail::TwoSided) ? std::abs(dev) >= ds : dev <= -ds;
        if (hit) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

BoundReport make_bound_report(double sum_s, double ds) {
    BoundReport rep;
    rep.sum_s = sum_s;
    rep.ds = ds;
    rep.ds2 = ds * ds;
    rep.two_sided = chebyshev_two_sided(sum_s, ds);
    rep.one_sided = cantelli_one_sided(sum_s, ds);
    rep.cpr = rep.two_sided;
    return rep;
}

}  // namespace cpr
