#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cpr/numerics.hpp"

namespace cpr {

struct Dataset {
    Matrix inputs;               // n x d_in
    std::vector<int> labels;     // dense in [0, K)
    std::size_t num_classes = 0;
    std::vector<std::string> label_names;  // dense index -> original label text

    std::size_t size() const { return inputs.rows(); }
    std::size_t input_dim() const { return inputs.cols(); }
    void validate() const;

    Dataset select(const std::vector<std::size_t>& indices) const;
};

/// Gaussian blobs: K class means on a sphere of radius (1 - overlap) around
/// the origin (directions seeded), samples mean + spread * N(0, I).
Dataset generate_blobs(std::size_t num_classes, std::size_t input_dim,
                       std::size_t n_per_class, double spread, double overlap,
                       std::uint64_t seed, double label_noise = 0.0);

/// Reassigns a fraction rho of labels uniformly to one of the other classes.
void flip_labels(Dataset& data, double rho, std::uint64_t seed);

/// Deterministic per-class split: the first (count - test_per_class) samples
/// of each class stay in train, the rest form the test split.
std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t test_per_class);

/// CSV with header `label,f0,f1,...`; labels are remapped to dense ids in
/// first-appearance order. When `known_labels` is given (test-time load),
/// unseen label text raises UnknownLabelError.
Dataset load_csv_dataset(const std::string& path,
                         const std::vector<std::string>& known_labels = {});
void save_csv_dataset(const Dataset& data, const std::string& path);

struct SubsetPlan {
    std::vector<std::vector<std::size_t>> subsets;  // one index list per draw
    double fraction = 1.0;
    std::uint64_t seed = 0;
};

/// Draws `draws` stratified subsets without replacement: per class exactly
/// floor(fraction * N_k) samples. Draw i uses the derived seed (seed + i),
/// so draws are mutually independent and the plan is a pure function of its
/// arguments.
SubsetPlan stratified_subsets(const Dataset& data, std::size_t draws, double fraction,
                              std::uint64_t seed);

/// Per-feature affine standardization fitted on train-split statistics.
struct Standardizer {
    Vector mean;
    Vector inv_std;

    static Standardizer fit(const Matrix& inputs);
    Matrix apply(const Matrix& inputs) const;
};

}  // namespace cpr
