#include "cpr/prototypes.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace cpr {

void PrototypeSet::zero_grad() {
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
}

PrototypeSet prototypes_from_features(const Matrix& features, const std::vector<int>& labels,
                                      std::size_t num_classes) {
    if (features.rows() != labels.size()) {
        throw DimensionMismatchError("prototypes_from_features: rows vs labels");
    }
    if (num_classes < 2) {
        throw InvalidParamError("prototypes_from_features: need at least two classes");
    }
    PrototypeSet proto;
    proto.values = Matrix(num_classes, features.cols());
    proto.grad = Matrix(num_classes, features.cols());
    proto.counts.assign(num_classes, 0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const int k = labels[i];
        if (k < 0 || static_cast<std::size_t>(k) >= num_classes) {
            throw LabelOutOfRangeError("prototypes_from_features: label " + std::to_string(k));
        }
        proto.counts[static_cast<std::size_t>(k)]++;
        for (std::size_t j = 0; j < features.cols(); ++j) {
            proto.values(static_cast<std::size_t>(k), j) += features(i, j);
        }
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (proto.counts[k] == 0) {
            throw EmptyClassError("class " + std::to_string(k) + " has no samples");
        }
        const double inv = 1.0 / static_cast<double>(proto.counts[k]);
        for (std::size_t j = 0; j < features.cols(); ++j) {
            proto.values(k, j) *= inv;
        }
    }
    proto.initialized = true;
    return proto;
}

PrototypeSet init_prototypes_from_means(const ModelParams& params, const Matrix& inputs,
                                        const std::vector<int>& labels,
                                        std::size_t num_classes) {
    if (inputs.rows() != labels.size()) {
        throw DimensionMismatchError("init_prototypes_from_means: rows vs labels");
    }
    // Two-pass accumulation in fixed-size batches keeps the trace memory flat.
    const std::size_t batch = 512;
    PrototypeSet proto;
    proto.values = Matrix(num_classes, params.feature_dim());
    proto.grad = Matrix(num_classes, params.feature_dim());
    proto.counts.assign(num_classes, 0);
    for (std::size_t start = 0; start < inputs.rows(); start += batch) {
        const std::size_t stop = std::min(inputs.rows(), start + batch);
        Matrix chunk(stop - start, inputs.cols());
        for (std::size_t i = start; i < stop; ++i) {
            for (std::size_t c = 0; c < inputs.cols(); ++c) {
                chunk(i - start, c) = inputs(i, c);
            }
        }
        const ForwardTrace trace = forward(params, chunk);
        const Matrix& feats = trace.features();
        if (!all_finite(feats)) {
            throw NonFiniteLossError("init_prototypes_from_means: non-finite features");
        }
        for (std::size_t i = start; i < stop; ++i) {
            const int k = labels[i];
            if (k < 0 || static_cast<std::size_t>(k) >= num_classes) {
                throw LabelOutOfRangeError("init_prototypes_from_means: label " +
                                           std::to_string(k));
            }
            proto.counts[static_cast<std::size_t>(k)]++;
            for (std::size_t j = 0; j < feats.cols(); ++j) {
                proto.values(static_cast<std::size_t>(k), j) += feats(i - start, j);
            }
        }
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (proto.counts[k] == 0) {
            throw EmptyClassError("class " + std::to_string(k) + " has no samples");
        }
        const double inv = 1.0 / static_cast<double>(proto.counts[k]);
        for (std::size_t j = 0; j < proto.values.cols(); ++j) {
            proto.values(k, j) *= inv;
        }
    }
    proto.initialized = true;
    return proto;
}

ProtoLossResult proto_loss_pair(const Vector& v, const Vector& p, ProtoLossForm form) {
    if (v.size() != p.size()) {
        throw DimensionMismatchError("proto_loss: feature/prototype lengths differ");
    }
    ProtoLossResult res;
    if (form == ProtoLossForm::Normalized) {
        const Vector v_hat = normalize(v);
        const Vector p_hat = normalize(p);
        res.loss = 0.0;
        res.d_feature.resize(v.size());
        res.d_prototype.resize(v.size());
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double d = v_hat[j] - p_hat[j];
            res.loss += d * d;
            res.d_feature[j] = 2.0 * d;
            res.d_prototype[j] = -2.0 * d;
        }
        res.wrt_unit = true;
    } else {
        res.loss = 0.0;
        res.d_feature.resize(v.size());
        res.d_prototype.resize(v.size());
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double d = v[j] - p[j];
            res.loss += d * d;
            res.d_feature[j] = 2.0 * d;
            res.d_prototype[j] = -2.0 * d;
        }
        res.wrt_unit = false;
    }
    return res;
}

ProtoLossResult proto_loss(const Vector& v, const PrototypeSet& proto, std::size_t label,
                           ProtoLossForm form) {
    if (label >= proto.num_classes()) {
        throw LabelOutOfRangeError("proto_loss: label " + std::to_string(label));
    }
    return proto_loss_pair(v, proto.prototype(label), form);
}

double dissimilarity(const PrototypeSet& proto, std::size_t k) {
    const std::size_t K = proto.num_classes();
    if (K < 2) {
        throw InvalidParamError("dissimilarity: need at least two prototypes");
    }
    if (k >= K) {
        throw LabelOutOfRangeError("dissimilarity: class " + std::to_string(k));
    }
    const Vector pk = proto.prototype(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        if (i == k) continue;
        sum += cosine_similarity(pk, proto.prototype(i));
    }
    return 1.0 - sum / static_cast<double>(K - 1);
}

CsLossResult cs_loss(const PrototypeSet& proto) {
    const std::size_t K = proto.num_classes();
    const std::size_t J = proto.dim();
    if (K < 2) {
        throw InvalidParamError("cs_loss: need at least two prototypes");
    }
    std::vector<Vector> units(K);
    for (std::size_t k = 0; k < K; ++k) {
        units[k] = proto.unit_prototype(k);
    }
    CsLossResult res;
    res.loss = 0.0;
    res.d_unit = Matrix(K, J);
    const double scale = 1.0 / static_cast<double>(K * (K - 1));
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = i + 1; j < K; ++j) {
            const double cs = std::clamp(dot(units[i], units[j]), -1.0, 1.0);
            res.loss += 2.0 * scale * cs * cs;  // ordered pairs (i,j) and (j,i)
            const double coeff = 4.0 * scale * cs;
            res.d_unit.axpy_row(i, units[j], coeff);
            res.d_unit.axpy_row(j, units[i], coeff);
        }
    }
    return res;
}

void save_prototypes_json(const PrototypeSet& proto, const std::string& path,
                          const std::vector<std::string>& label_names) {
    nlohmann::json doc;
    doc["classes"] = proto.num_classes();
    doc["dim"] = proto.dim();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t k = 0; k < proto.num_classes(); ++k) {
        rows.push_back(proto.prototype(k));
    }
    doc["prototypes"] = std::move(rows);
    doc["counts"] = proto.counts;
    if (!label_names.empty()) {
        if (label_names.size() != proto.num_classes()) {
            throw DimensionMismatchError("save_prototypes_json: label name count");
        }
        doc["label_names"] = label_names;
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out << doc.dump(2) << "\n";
}

PrototypeSet load_prototypes_json(const std::string& path,
                                  std::vector<std::string>* label_names) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("prototype snapshot " + path + ": " + e.what());
    }
    const auto K = doc.at("classes").get<std::size_t>();
    const auto J = doc.at("dim").get<std::size_t>();
    const auto& rows = doc.at("prototypes");
    if (rows.size() != K) {
        throw ParseError("prototype snapshot: class count mismatch");
    }
    PrototypeSet proto;
    proto.values = Matrix(K, J);
    proto.grad = Matrix(K, J);
    for (std::size_t k = 0; k < K; ++k) {
        const auto vec = rows[k].get<std::vector<double>>();
        if (vec.size() != J) {
            throw ParseError("prototype snapshot: row width mismatch at class " +
                             std::to_string(k));
        }
        proto.values.set_row(k, vec);
    }
    if (doc.contains("counts")) {
        proto.counts = doc.at("counts").get<std::vector<std::size_t>>();
    } else {
        proto.counts.assign(K, 0);
    }
    if (label_names != nullptr) {
        label_names->clear();
        if (doc.contains("label_names")) {
            *label_names = doc.at("label_names").get<std::vector<std::string>>();
        }
    }
    proto.initialized = true;
    return proto;
}

}  // namespace cpr
