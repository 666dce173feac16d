#include "cpr/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace cpr {

namespace {

double activate(Activation a, double x) {
    switch (a) {
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Identity: return x;
    }
    return x;
}

double activate_grad(Activation a, double pre) {
    switch (a) {
        case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

}  // namespace

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "relu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation: " + name);
}

ModelParams init_model(const std::vector<std::size_t>& widths, Activation activation,
                       std::uint64_t seed) {
    if (widths.size() < 3) {
        throw InvalidArchitectureError("need input, at least one hidden layer, and output");
    }
    for (std::size_t w : widths) {
        if (w == 0) {
            throw InvalidArchitectureError("zero layer width");
        }
    }
    SeededRng rng(seed);
    ModelParams params;
    params.activation = activation;
    params.layers.reserve(widths.size() - 1);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Layer layer;
        const std::size_t fan_in = widths[l];
        const std::size_t fan_out = widths[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
        layer.weights = Matrix(fan_out, fan_in);
        for (double& w : layer.weights.data()) {
            w = (2.0 * rng.next_double() - 1.0) * a;
        }
        layer.bias.assign(fan_out, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

ForwardTrace forward(const ModelParams& params, const Matrix& batch) {
    if (batch.cols() != params.input_dim()) {
        throw DimensionMismatchError("forward: input width " + std::to_string(batch.cols()) +
                                     ", model expects " + std::to_string(params.input_dim()));
    }
    ForwardTrace trace;
    trace.input = batch;
    const Matrix* current = &trace.input;
    const std::size_t n_layers = params.layers.size();
    trace.preacts.reserve(n_layers);
    trace.acts.reserve(n_layers - 1);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Layer& layer = params.layers[l];
        Matrix pre = matmul_transpose_b(*current, layer.weights);
        for (std::size_t i = 0; i < pre.rows(); ++i) {
            for (std::size_t j = 0; j < pre.cols(); ++j) {
                pre(i, j) += layer.bias[j];
            }
        }
        trace.preacts.push_back(std::move(pre));
        if (l + 1 < n_layers) {
            const Matrix& p = trace.preacts.back();
            Matrix act(p.rows(), p.cols());
            for (std::size_t i = 0; i < p.rows(); ++i) {
                for (std::size_t j = 0; j < p.cols(); ++j) {
                    act(i, j) = activate(params.activation, p(i, j));
                }
            }
            trace.acts.push_back(std::move(act));
            current = &trace.acts.back();
        }
    }
    return trace;
}

Vector softmax(const Vector& logits) {
    double m = logits[0];
    for (double z : logits) m = std::max(m, z);
    Vector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
    return out;
}

CrossEntropyResult cross_entropy(const Vector& logits, std::size_t label) {
    if (label >= logits.size()) {
        throw LabelOutOfRangeError("cross_entropy: label " + std::to_string(label) +
                                   " for " + std::to_string(logits.size()) + " classes");
    }
    double m = logits[0];
    for (double z : logits) m = std::max(m, z);
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    const double lse = m + std::log(sum);

    CrossEntropyResult res;
    res.loss = lse - logits[label];
    res.d_logits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        res.d_logits[i] = std::exp(logits[i] - lse);
    }
    res.d_logits[label] -= 1.0;
    return res;
}

ParamGrads zero_grads(const ModelParams& params) {
    ParamGrads grads;
    grads.layers.reserve(params.layers.size());
    for (const Layer& layer : params.layers) {
        Layer g;
        g.weights = Matrix(layer.weights.rows(), layer.weights.cols());
        g.bias.assign(layer.bias.size(), 0.0);
        grads.layers.push_back(std::move(g));
    }
    return grads;
}

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    const FeatureUpstream& upstream) {
    const std::size_t n = trace.batch_size();
    const std::size_t n_layers = params.layers.size();
    const std::size_t feat_dim = params.feature_dim();
    ParamGrads grads = zero_grads(params);

    // Total gradient w.r.t. the raw features v: direct part plus the
    // normalization pullback of any unit-feature gradient.
    Matrix d_feat(n, feat_dim);
    if (!upstream.d_features.empty()) {
        if (upstream.d_features.rows() != n || upstream.d_features.cols() != feat_dim) {
            throw DimensionMismatchError("backward: d_features shape");
        }
        d_feat = upstream.d_features;
    }
    if (!upstream.d_unit_features.empty()) {
        if (upstream.d_unit_features.rows() != n || upstream.d_unit_features.cols() != feat_dim) {
            throw DimensionMismatchError("backward: d_unit_features shape");
        }
        const Matrix& v = trace.features();
        for (std::size_t i = 0; i < n; ++i) {
            Vector g = upstream.d_unit_features.row(i);
            bool nonzero = false;
            for (double x : g) {
                if (x != 0.0) {
                    nonzero = true;
                    break;
                }
            }
            if (!nonzero) continue;
            d_feat.axpy_row(i, normalize_pullback(v.row(i), g), 1.0);
        }
    }

    // Classifier layer.
    if (!upstream.d_logits.empty()) {
        if (upstream.d_logits.rows() != n || upstream.d_logits.cols() != params.num_classes()) {
            throw DimensionMismatchError("backward: d_logits shape");
        }
        const Layer& head = params.layers.back();
        Layer& head_grad = grads.layers.back();
        head_grad.weights = matmul_transpose_a(upstream.d_logits, trace.features());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < head.bias.size(); ++j) {
                head_grad.bias[j] += upstream.d_logits(i, j);
            }
        }
        const Matrix into_features = matmul(upstream.d_logits, head.weights);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < feat_dim; ++j) {
                d_feat(i, j) += into_features(i, j);
            }
        }
    }

    // Hidden layers, last to first.
    Matrix d_act = std::move(d_feat);
    for (std::size_t l = n_layers - 1; l-- > 0;) {
        const Matrix& pre = trace.preacts[l];
        Matrix d_pre(n, pre.cols());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < pre.cols(); ++j) {
                d_pre(i, j) = d_act(i, j) * activate_grad(params.activation, pre(i, j));
            }
        }
        const Matrix& input = (l == 0) ? trace.input : trace.acts[l - 1];
        grads.layers[l].weights = matmul_transpose_a(d_pre, input);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < pre.cols(); ++j) {
                grads.layers[l].bias[j] += d_pre(i, j);
            }
        }
        if (l > 0) {
            d_act = matmul(d_pre, params.layers[l].weights);
        }
    }
    return grads;
}

OptimState make_optim_state(const ModelParams& params, double lr0, double momentum,
                            double weight_decay, std::size_t total_epochs,
                            std::size_t warmup_epochs) {
    if (momentum < 0.0 || momentum >= 1.0) {
        throw InvalidParamError("momentum must lie in [0, 1)");
    }
    if (lr0 < 0.0) {
        throw InvalidParamError("learning rate must be >= 0");
    }
    OptimState opt;
    opt.lr0 = lr0;
    opt.momentum = momentum;
    opt.weight_decay = weight_decay;
    opt.total_epochs = total_epochs;
    opt.warmup_epochs = warmup_epochs;
    opt.buffers.reserve(params.layers.size());
    for (const Layer& layer : params.layers) {
        Layer buf;
        buf.weights = Matrix(layer.weights.rows(), layer.weights.cols());
        buf.bias.assign(layer.bias.size(), 0.0);
        opt.buffers.push_back(std::move(buf));
    }
    return opt;
}

double lr_at(const OptimState& opt, std::size_t epoch) {
    const double t = static_cast<double>(epoch) / static_cast<double>(opt.total_epochs);
    return 0.5 * opt.lr0 * (1.0 + std::cos(M_PI * t));
}

void sgd_momentum_update(std::vector<double>& param, const std::vector<double>& grad,
                         std::vector<double>& buffer, double lr, double momentum,
                         double weight_decay) {
    if (param.size() != grad.size() || param.size() != buffer.size()) {
        throw DimensionMismatchError("sgd_momentum_update: size mismatch");
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i] + weight_decay * param[i];
        buffer[i] = momentum * buffer[i] + g;
        param[i] -= lr * buffer[i];
    }
}

void sgd_momentum_step(ModelParams& params, const ParamGrads& grads, OptimState& opt) {
    if (grads.layers.size() != params.layers.size()) {
        throw DimensionMismatchError("sgd_momentum_step: layer count mismatch");
    }
    const double lr = lr_at(opt, opt.epoch);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (!params.layers[l].weights.same_shape(grads.layers[l].weights) ||
            params.layers[l].bias.size() != grads.layers[l].bias.size()) {
            throw DimensionMismatchError("sgd_momentum_step: shape mismatch at layer " +
                                         std::to_string(l));
        }
        sgd_momentum_update(params.layers[l].weights.data(), grads.layers[l].weights.data(),
                            opt.buffers[l].weights.data(), lr, opt.momentum, opt.weight_decay);
        sgd_momentum_update(params.layers[l].bias, grads.layers[l].bias, opt.buffers[l].bias,
                            lr, opt.momentum, opt.weight_decay);
    }
    ++opt.step;
}

void save_model_json(const ModelParams& params, const std::string& path) {
    nlohmann::json doc;
    doc["activation"] = activation_name(params.activation);
    std::vector<std::size_t> widths;
    widths.push_back(params.input_dim());
    for (const Layer& layer : params.layers) {
        widths.push_back(layer.weights.rows());
    }
    doc["widths"] = widths;
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : params.layers) {
        nlohmann::json jl;
        jl["rows"] = layer.weights.rows();
        jl["cols"] = layer.weights.cols();
        jl["weights"] = layer.weights.data();
        jl["bias"] = layer.bias;
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out << doc.dump(2) << "\n";
}

ModelParams load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model checkpoint " + path + ": " + e.what());
    }
    ModelParams params;
    params.activation = activation_from_name(doc.at("activation").get<std::string>());
    for (const auto& jl : doc.at("layers")) {
        Layer layer;
        const auto rows = jl.at("rows").get<std::size_t>();
        const auto cols = jl.at("cols").get<std::size_t>();
        layer.weights = Matrix(rows, cols);
        layer.weights.data() = jl.at("weights").get<std::vector<double>>();
        if (layer.weights.data().size() != rows * cols) {
            throw ParseError("model checkpoint: weight count mismatch");
        }
        layer.bias = jl.at("bias").get<std::vector<double>>();
        if (layer.bias.size() != rows) {
            throw ParseError("model checkpoint: bias length mismatch");
        }
        params.layers.push_back(std::move(layer));
    }
    if (params.layers.size() < 2) {
        throw ParseError("model checkpoint: fewer than two layers");
    }
    return params;
}

}  // namespace cpr
