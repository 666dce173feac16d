#include "cpr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace cpr {

void Dataset::validate() const {
    if (inputs.rows() != labels.size()) {
        throw DimensionMismatchError("dataset: input rows vs label count");
    }
    if (num_classes == 0 || size() < num_classes) {
        throw InvalidParamError("dataset: need at least one sample per class");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw LabelOutOfRangeError("dataset: label " + std::to_string(y));
        }
    }
    if (!all_finite(inputs)) {
        throw InvalidParamError("dataset: non-finite input value");
    }
}

Dataset Dataset::select(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.num_classes = num_classes;
    out.label_names = label_names;
    out.inputs = Matrix(indices.size(), inputs.cols());
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= size()) {
            throw InvalidParamError("dataset select: index out of range");
        }
        for (std::size_t c = 0; c < inputs.cols(); ++c) {
            out.inputs(i, c) = inputs(src, c);
        }
        out.labels[i] = labels[src];
    }
    return out;
}

Dataset generate_blobs(std::size_t num_classes, std::size_t input_dim,
                       std::size_t n_per_class, double spread, double overlap,
                       std::uint64_t seed, double label_noise) {
    if (num_classes < 2) {
        throw InvalidParamError("generate_blobs: need at least two classes");
    }
    if (n_per_class == 0 || input_dim == 0) {
        throw InvalidParamError("generate_blobs: counts and dimension must be positive");
    }
    if (spread < 0.0) {
        throw InvalidParamError("generate_blobs: spread must be >= 0");
    }
    SeededRng rng(seed);

    // Class means: seeded unit directions scaled by (1 - overlap), so
    // overlap = 0 gives well separated blobs and overlap -> 1 collapses them.
    const double radius = 1.0 - overlap;
    Matrix means(num_classes, input_dim);
    for (std::size_t k = 0; k < num_classes; ++k) {
        Vector dir(input_dim);
        for (double& x : dir) x = rng.next_normal();
        dir = normalize(dir);
        for (std::size_t c = 0; c < input_dim; ++c) {
            means(k, c) = radius * dir[c];
        }
    }

    Dataset data;
    data.num_classes = num_classes;
    data.inputs = Matrix(num_classes * n_per_class, input_dim);
    data.labels.resize(num_classes * n_per_class);
    data.label_names.resize(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
        data.label_names[k] = std::to_string(k);
    }
    std::size_t row = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            for (std::size_t c = 0; c < input_dim; ++c) {
                data.inputs(row, c) = means(k, c) + spread * rng.next_normal();
            }
            data.labels[row] = static_cast<int>(k);
        }
    }
    if (label_noise > 0.0) {
        flip_labels(data, label_noise, SeededRng::derive(seed, 0x1ABE1));
    }
    return data;
}

void flip_labels(Dataset& data, double rho, std::uint64_t seed) {
    if (rho < 0.0 || rho > 1.0) {
        throw InvalidParamError("flip_labels: rho must lie in [0, 1]");
    }
    if (data.num_classes < 2 || rho == 0.0) return;
    SeededRng rng(seed);
    const auto K = static_cast<std::int64_t>(data.num_classes);
    for (int& y : data.labels) {
        if (rng.next_double() >= rho) continue;
        auto other = rng.uniform_int(0, K - 2);
        if (other >= y) ++other;
        y = static_cast<int>(other);
    }
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t test_per_class) {
    std::vector<std::size_t> counts(data.num_classes, 0);
    std::vector<std::size_t> train_idx, test_idx;
    std::vector<std::size_t> class_total(data.num_classes, 0);
    for (int y : data.labels) class_total[static_cast<std::size_t>(y)]++;
    for (std::size_t k = 0; k < data.num_classes; ++k) {
        if (class_total[k] <= test_per_class) {
            throw InvalidParamError("split_per_class: class " + std::to_string(k) +
                                    " has too few samples");
        }
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto k = static_cast<std::size_t>(data.labels[i]);
        if (counts[k] < class_total[k] - test_per_class) {
            train_idx.push_back(i);
        } else {
            test_idx.push_back(i);
        }
        counts[k]++;
    }
    return {data.select(train_idx), data.select(test_idx)};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

}  // namespace

Dataset load_csv_dataset(const std::string& path, const std::vector<std::string>& known_labels) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path + ": empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "label") {
        throw ParseError(path + ": header must start with 'label'");
    }
    const std::size_t width = header.size() - 1;
    if (width == 0) {
        throw ParseError(path + ": no feature columns");
    }

    Dataset data;
    std::unordered_map<std::string, int> mapping;
    const bool fixed_mapping = !known_labels.empty();
    if (fixed_mapping) {
        data.label_names = known_labels;
        for (std::size_t i = 0; i < known_labels.size(); ++i) {
            mapping[known_labels[i]] = static_cast<int>(i);
        }
    }

    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != width + 1) {
            throw InconsistentWidthError(path + ": line " + std::to_string(line_no) + " has " +
                                         std::to_string(cells.size()) + " columns, expected " +
                                         std::to_string(width + 1));
        }
        auto it = mapping.find(cells[0]);
        if (it == mapping.end()) {
            if (fixed_mapping) {
                throw UnknownLabelError(path + ": line " + std::to_string(line_no) +
                                        " has label '" + cells[0] +
                                        "' absent from the training mapping");
            }
            const int id = static_cast<int>(data.label_names.size());
            it = mapping.emplace(cells[0], id).first;
            data.label_names.push_back(cells[0]);
        }
        data.labels.push_back(it->second);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            try {
                std::size_t consumed = 0;
                const double x = std::stod(cells[c], &consumed);
                if (consumed != cells[c].size()) {
                    throw std::invalid_argument("trailing characters");
                }
                values.push_back(x);
            } catch (const std::exception&) {
                throw ParseError(path + ": line " + std::to_string(line_no) +
                                 ": bad numeric value '" + cells[c] + "'");
            }
        }
    }
    if (data.labels.empty()) {
        throw ParseError(path + ": no data rows");
    }
    data.num_classes = data.label_names.size();
    data.inputs = Matrix(data.labels.size(), width);
    data.inputs.data() = std::move(values);
    data.validate();
    return data;
}

void save_csv_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out << "label";
    for (std::size_t c = 0; c < data.input_dim(); ++c) {
        out << ",f" << c;
    }
    out << "\n";
    char buf[40];
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto k = static_cast<std::size_t>(data.labels[i]);
        out << (k < data.label_names.size() ? data.label_names[k] : std::to_string(k));
        for (std::size_t c = 0; c < data.input_dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.inputs(i, c));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) {
        throw IoError("write failed for " + path);
    }
}

SubsetPlan stratified_subsets(const Dataset& data, std::size_t draws, double fraction,
                              std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw InvalidParamError("stratified_subsets: fraction must lie in (0, 1]");
    }
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int y = data.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= data.num_classes) {
            throw LabelOutOfRangeError("stratified_subsets: label " + std::to_string(y));
        }
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    for (std::size_t k = 0; k < data.num_classes; ++k) {
        if (by_class[k].empty()) {
            throw EmptyClassError("stratified_subsets: class " + std::to_string(k) +
                                  " has no samples");
        }
        if (static_cast<std::size_t>(fraction * static_cast<double>(by_class[k].size())) == 0) {
            throw FractionTooSmallError("stratified_subsets: fraction " +
                                        std::to_string(fraction) + " empties class " +
                                        std::to_string(k));
        }
    }

    SubsetPlan plan;
    plan.fraction = fraction;
    plan.seed = seed;
    plan.subsets.reserve(draws);
    for (std::size_t d = 0; d < draws; ++d) {
        SeededRng rng(seed + d);  // derived seed per draw
        std::vector<std::size_t> subset;
        for (std::size_t k = 0; k < data.num_classes; ++k) {
            std::vector<std::size_t> pool = by_class[k];
            shuffle_indices(pool, rng);
            const auto take = static_cast<std::size_t>(
                fraction * static_cast<double>(pool.size()));
            subset.insert(subset.end(), pool.begin(), pool.begin() + take);
        }
        shuffle_indices(subset, rng);
        plan.subsets.push_back(std::move(subset));
    }
    return plan;
}

Standardizer Standardizer::fit(const Matrix& inputs) {
    if (inputs.rows() == 0) {
        throw EmptyInputError("standardizer: no rows");
    }
    const std::size_t d = inputs.cols();
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.inv_std.assign(d, 1.0);
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            s.mean[c] += inputs(i, c);
        }
    }
    for (double& m : s.mean) m /= static_cast<double>(inputs.rows());
    Vector var(d, 0.0);
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            const double dev = inputs(i, c) - s.mean[c];
            var[c] += dev * dev;
        }
    }
    for (std::size_t c = 0; c < d; ++c) {
        const double sd = std::sqrt(var[c] / static_cast<double>(inputs.rows()));
        s.inv_std[c] = sd > kEpsNorm ? 1.0 / sd : 1.0;
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& inputs) const {
    if (inputs.cols() != mean.size()) {
        throw DimensionMismatchError("standardizer: width mismatch");
    }
    Matrix out(inputs.rows(), inputs.cols());
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
        for (std::size_t c = 0; c < inputs.cols(); ++c) {
            out(i, c) = (inputs(i, c) - mean[c]) * inv_std[c];
        }
    }
    return out;
}

}  // namespace cpr
