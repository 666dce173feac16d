#pragma once

#include <cstddef>
#include <string>

#include "cpr/numerics.hpp"

namespace cpr {

enum class OrthoregMode { BothSigns, PositiveOnly };

std::string orthoreg_mode_name(OrthoregMode mode);
OrthoregMode orthoreg_mode_from_name(const std::string& name);

struct BaselineConfig {
    double decov_weight = 0.1;
    OrthoregMode orthoreg_mode = OrthoregMode::PositiveOnly;
    double orthoreg_weight = 0.1;
    bool squentropy = false;
};

struct DecovResult {
    double loss;
    Matrix d_features;  // n x d
};

/// Batch covariance penalty: C = (1/n) (H - mu)^T (H - mu),
/// loss = 0.5 (|C|_F^2 - |diag C|^2).
DecovResult decov_loss(const Matrix& batch_features);

struct OrthoregResult {
    double loss;
    Matrix d_weights;  // n x d, gradient w.r.t. the raw weight rows
};

/// 0.5 * sum over ordered row pairs of CS(theta_i, theta_j)^2; PositiveOnly
/// drops pairs with negative cosine similarity.
OrthoregResult orthoreg_cost(const Matrix& weight_rows, OrthoregMode mode);

struct SquentropyResult {
    double loss;
    double ce_part;
    double penalty_part;  // (1/(K-1)) sum of squared non-true logits
    Vector d_logits;
};

SquentropyResult squentropy_loss(const Vector& logits, std::size_t label);

}  // namespace cpr
