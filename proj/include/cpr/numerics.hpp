#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cpr/errors.hpp"

namespace cpr {

using Vector = std::vector<double>;
using Permutation = std::vector<std::size_t>;

// Norms at or below this are treated as zero; the direction of such a
// vector is numerically meaningless.
inline constexpr double kEpsNorm = 1e-12;

/// Dense row-major matrix of doubles. All accumulation in this library is
/// done in 64-bit floating point.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    Vector row(std::size_t r) const;
    void set_row(std::size_t r, const Vector& v);
    // this.row(r) += scale * v
    void axpy_row(std::size_t r, const Vector& v, double scale);

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);

double dot(const Vector& v, const Vector& u);
double norm(const Vector& v);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

/// Scales v to unit L2 norm. Throws ZeroNormError when the norm is at or
/// below kEpsNorm.
Vector normalize(const Vector& v);

/// Pulls a gradient w.r.t. the unit vector v/|v| back to a gradient w.r.t.
/// v itself: (g - (g . v_hat) v_hat) / |v|.
Vector normalize_pullback(const Vector& v, const Vector& d_unit);

/// Cosine similarity, clamped to [-1, 1] to absorb rounding.
double cosine_similarity(const Vector& v, const Vector& u);

enum class SortOrder { Ascending, Descending };

struct SortResult {
    Vector sorted;
    // perm[i] is the position of original element i in `sorted`, so
    // gathering sorted by perm reconstructs the input. Ties keep their
    // original relative order.
    Permutation perm;
};

SortResult sort_with_permutation(const Vector& v, SortOrder order);

// out[i] = v[perm[i]]
Vector apply_permutation(const Vector& v, const Permutation& perm);
Permutation invert_permutation(const Permutation& perm);

/// SplitMix64: the one counter-based generator used repo-wide. Identical
/// seeds produce identical streams on every platform (the integer and
/// uniform draws exactly; normal draws additionally go through libm sqrt
/// and log). Instances are single-owner: parallel code derives fresh seeds
/// via split()/derive() and never shares a stream.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    /// Standard normal via the Marsaglia polar method.
    double next_normal();

    /// Independent stream derived from the current state and a stream tag.
    SeededRng split(std::uint64_t stream) const { return SeededRng(derive(state_, stream)); }

    /// Pure seed-derivation function used for reproducible sub-seeds.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
        return mix(seed + 0x632BE59BD9B4E019ULL * (tag + 1));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

  private:
    std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by the repo RNG.
void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng);

}  // namespace cpr
