#pragma once

#include <cstdint>
#include <vector>

#include "cpr/numerics.hpp"
#include "cpr/prototypes.hpp"

namespace cpr {

using CovMatrix = Matrix;  // J x J, symmetric positive semi-definite

enum class PadMode { Fixed, Uniform };

struct CovLossConfig {
    int nu = -1;        // -1 negative products, 0 both signs, 1 positive products
    int r_max = 10;     // pad radius bound; Fixed mode uses exactly r_max
    PadMode pad_mode = PadMode::Uniform;
    SortOrder sort_order = SortOrder::Descending;

    void validate() const;
};

/// delta_j = p_hat_j * (v_hat_j - p_hat_j); the prototype is a constant here.
Vector delta_vector(const Vector& v_hat, const Vector& p_hat);

struct CovLossResult {
    double loss;
    Vector d_unit_feature;  // dL/dv_hat in original index order; prototype frozen
    int pad_radius;         // the r actually used
};

/// The log-linear covariance loss for one example: sorts the unit prototype,
/// reindexes the unit feature vector the same way, pads the delta vector by r
/// zeros left and right, filters the elementwise product by nu, and averages
/// over J + r entries. Positive and negative product sums are accumulated
/// separately so that loss(nu=0) == loss(nu=1) + loss(nu=-1) holds exactly.
CovLossResult cov_loss_pair(const Vector& v, const Vector& p, const CovLossConfig& cfg, int r);

/// Draws r (uniform in [1, r_max], or r_max in Fixed mode) and evaluates the
/// loss against the prototype of the example's class.
CovLossResult cov_loss_single(const Vector& v, const PrototypeSet& proto, std::size_t label,
                              const CovLossConfig& cfg, SeededRng& rng);

/// Exact O(J^2) oracle: population covariance (divide by N) of the product
/// vectors a_n = v_hat_n ⊙ p_hat over the sample set. Inputs are normalized
/// internally. Rows of `features` are samples.
CovMatrix cov_matrix_oracle(const Matrix& features, const Vector& p);

/// 1^T S 1.
double ones_quadratic_form(const CovMatrix& s);

/// CPR = 1^T S 1 / DS^2.
double cpr_metric(const CovMatrix& s, double ds);

/// Two-sided Chebyshev bound sum_S / ds^2; may exceed 1 (vacuous).
double chebyshev_two_sided(double sum_s, double ds);

/// One-sided Chebyshev-Cantelli bound sum_S / (sum_S + ds^2), always in [0,1].
double cantelli_one_sided(double sum_s, double ds);

enum class Tail { TwoSided, Lower };

/// Fraction of samples whose CS(v_hat_n, p_hat) deviates from the sample mean
/// by at least ds (two-sided) or lies at or below mean - ds (lower).
double empirical_tail_probability(const Matrix& features, const Vector& p, double ds, Tail tail);

struct BoundReport {
    double sum_s = 0.0;      // 1^T S 1
    double ds = 0.0;         // DS_k
    double ds2 = 0.0;        // DS_k^2
    double two_sided = 0.0;  // Chebyshev
    double one_sided = 0.0;  // Cantelli
    double cpr = 0.0;        // equals two_sided
};

BoundReport make_bound_report(double sum_s, double ds);

}  // namespace cpr
