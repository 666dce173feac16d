#include "cpr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cpr {

Vector Matrix::row(std::size_t r) const {
    Vector out(cols_);
    const double* p = data_.data() + r * cols_;
    std::copy(p, p + cols_, out.begin());
    return out;
}

void Matrix::set_row(std::size_t r, const Vector& v) {
    if (v.size() != cols_) {
        throw DimensionMismatchError("set_row: expected width " + std::to_string(cols_) +
                                     ", got " + std::to_string(v.size()));
    }
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
}

void Matrix::axpy_row(std::size_t r, const Vector& v, double scale) {
    if (v.size() != cols_) {
        throw DimensionMismatchError("axpy_row: expected width " + std::to_string(cols_) +
                                     ", got " + std::to_string(v.size()));
    }
    double* p = data_.data() + r * cols_;
    for (std::size_t c = 0; c < cols_; ++c) {
        p[c] += scale * v[c];
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionMismatchError("matmul: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionMismatchError("matmul_transpose_a: row counts differ");
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aki * b(k, j);
            }
        }
    }
    return c;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionMismatchError("matmul_transpose_b: column counts differ");
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += a(i, k) * b(j, k);
            }
            c(i, j) = s;
        }
    }
    return c;
}

double dot(const Vector& v, const Vector& u) {
    if (v.size() != u.size()) {
        throw DimensionMismatchError("dot: lengths " + std::to_string(v.size()) + " vs " +
                                     std::to_string(u.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += v[i] * u[i];
    }
    return s;
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

bool all_finite(const Vector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Matrix& m) { return all_finite(m.data()); }

Vector normalize(const Vector& v) {
    const double n = norm(v);
    if (!(n > kEpsNorm)) {
        throw ZeroNormError("normalize: norm " + std::to_string(n) + " at or below " +
                            std::to_string(kEpsNorm));
    }
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = v[i] / n;
    }
    return out;
}

Vector normalize_pullback(const Vector& v, const Vector& d_unit) {
    if (v.size() != d_unit.size()) {
        throw DimensionMismatchError("normalize_pullback: length mismatch");
    }
    const double n = norm(v);
    if (!(n > kEpsNorm)) {
        throw ZeroNormError("normalize_pullback: zero-norm base vector");
    }
    const double inv = 1.0 / n;
    double radial = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        radial += d_unit[i] * v[i] * inv;
    }
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = (d_unit[i] - radial * v[i] * inv) * inv;
    }
    return out;
}

double cosine_similarity(const Vector& v, const Vector& u) {
    if (v.size() != u.size()) {
        throw DimensionMismatchError("cosine_similarity: lengths differ");
    }
    const double nv = norm(v);
    const double nu = norm(u);
    if (!(nv > kEpsNorm) || !(nu > kEpsNorm)) {
        throw ZeroNormError("cosine_similarity: zero-norm argument");
    }
    const double cs = dot(v, u) / (nv * nu);
    return std::clamp(cs, -1.0, 1.0);
}

SortResult sort_with_permutation(const Vector& v, SortOrder order) {
    if (!all_finite(v)) {
        throw InvalidParamError("sort_with_permutation: non-finite element");
    }
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (order == SortOrder::Ascending) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    } else {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    }
    SortResult out;
    out.sorted.resize(v.size());
    out.perm.resize(v.size());
    for (std::size_t pos = 0; pos < idx.size(); ++pos) {
        out.sorted[pos] = v[idx[pos]];
        out.perm[idx[pos]] = pos;
    }
    return out;
}

Vector apply_permutation(const Vector& v, const Permutation& perm) {
    if (v.size() != perm.size()) {
        throw DimensionMismatchError("apply_permutation: length mismatch");
    }
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = v[perm[i]];
    }
    return out;
}

Permutation invert_permutation(const Permutation& perm) {
    Permutation inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        inv[perm[i]] = i;
    }
    return inv;
}

std::int64_t SeededRng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) {
        throw InvalidParamError("uniform_int: empty range");
    }
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1ULL;
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

double SeededRng::next_normal() {
    for (;;) {
        const double u = 2.0 * next_double() - 1.0;
        const double v = 2.0 * next_double() - 1.0;
        const double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) {
            return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng) {
    if (idx.size() < 2) return;
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(idx[i], idx[j]);
    }
}

}  // namespace cpr
