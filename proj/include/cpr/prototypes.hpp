#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpr/model.hpp"
#include "cpr/numerics.hpp"

namespace cpr {

/// K learnable class prototypes, stored unnormalized; the losses consume
/// normalized copies. One prototype per class label.
struct PrototypeSet {
    Matrix values;                    // K x J
    std::vector<std::size_t> counts;  // samples per class at initialization
    Matrix grad;                      // accumulator, K x J
    bool initialized = false;

    std::size_t num_classes() const { return values.rows(); }
    std::size_t dim() const { return values.cols(); }

    Vector prototype(std::size_t k) const { return values.row(k); }
    Vector unit_prototype(std::size_t k) const { return normalize(values.row(k)); }

    void zero_grad();
};

/// Builds prototypes as the arithmetic mean of every class sample's raw
/// feature vector g(x) over the given split.
PrototypeSet init_prototypes_from_means(const ModelParams& params, const Matrix& inputs,
                                        const std::vector<int>& labels,
                                        std::size_t num_classes);

/// Same computation on a precomputed feature matrix.
PrototypeSet prototypes_from_features(const Matrix& features, const std::vector<int>& labels,
                                      std::size_t num_classes);

enum class ProtoLossForm { Normalized, Unnormalized };

struct ProtoLossResult {
    double loss;
    // Gradients w.r.t. the normalized feature/prototype (Normalized form) or
    // the raw vectors (Unnormalized form); wrt_unit records which.
    Vector d_feature;
    Vector d_prototype;
    bool wrt_unit;
};

/// |v_hat - p_hat|^2 against the prototype of the true class (or the raw
/// squared distance in Unnormalized form).
ProtoLossResult proto_loss(const Vector& v, const PrototypeSet& proto, std::size_t label,
                           ProtoLossForm form = ProtoLossForm::Normalized);

/// Explicit-vector variant used by tests and the Python bindings.
ProtoLossResult proto_loss_pair(const Vector& v, const Vector& p,
                                ProtoLossForm form = ProtoLossForm::Normalized);

/// DS_k = 1 - mean_{i != k} CS(p_k, p_i). 1 means mutual orthogonality.
double dissimilarity(const PrototypeSet& proto, std::size_t k);

struct CsLossResult {
    double loss;
    Matrix d_unit;  // K x J, gradient w.r.t. each normalized prototype
};

/// Mean squared cosine similarity over ordered prototype pairs:
/// (1/(K(K-1))) sum_{i != j} CS(p_i, p_j)^2.
CsLossResult cs_loss(const PrototypeSet& proto);

// Prototype snapshot (JSON): array index is the class id. label_names, when
// given, records the original label text per class so feature dumps can be
// matched back to snapshot classes.
void save_prototypes_json(const PrototypeSet& proto, const std::string& path,
                          const std::vector<std::string>& label_names = {});
PrototypeSet load_prototypes_json(const std::string& path,
                                  std::vector<std::string>* label_names = nullptr);

}  // namespace cpr
