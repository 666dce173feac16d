#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpr/numerics.hpp"

namespace cpr {

enum class Activation { ReLU, Tanh, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
    Matrix weights;  // out x in
    Vector bias;     // out
};

/// f(x) = h(g(x)): a stack of hidden layers (the feature extractor g) whose
/// last output is the J-dimensional penultimate feature vector, followed by
/// one linear classifier layer h mapping J -> K. Hidden layers share one
/// activation; the default ReLU keeps penultimate features non-negative.
struct ModelParams {
    std::vector<Layer> layers;
    Activation activation = Activation::ReLU;

    std::size_t input_dim() const { return layers.front().weights.cols(); }
    std::size_t feature_dim() const { return layers[layers.size() - 2].weights.rows(); }
    std::size_t num_classes() const { return layers.back().weights.rows(); }
    std::size_t num_layers() const { return layers.size(); }
};

/// Weights drawn uniform(-a, a) with a = sqrt(6 / fan_in); biases zero.
/// widths = [input, hidden..., J, K]; at least one hidden layer.
ModelParams init_model(const std::vector<std::size_t>& widths, Activation activation,
                       std::uint64_t seed);

struct ForwardTrace {
    Matrix input;                  // n x d_in
    std::vector<Matrix> preacts;   // one per layer, n x layer_out
    std::vector<Matrix> acts;      // one per hidden layer, n x layer_out

    const Matrix& features() const { return acts.back(); }  // v, pre-normalization
    const Matrix& logits() const { return preacts.back(); }
    std::size_t batch_size() const { return input.rows(); }
};

ForwardTrace forward(const ModelParams& params, const Matrix& batch);

struct CrossEntropyResult {
    double loss;
    Vector d_logits;  // softmax(z) - onehot(label)
};

Vector softmax(const Vector& logits);

/// -log softmax(z)[label], computed with log-sum-exp stabilization.
CrossEntropyResult cross_entropy(const Vector& logits, std::size_t label);

/// Upstream gradients feeding backward(). Any member may be left empty.
/// d_unit_features is a gradient w.r.t. the normalized features v/|v| and is
/// pulled back through the normalization internally.
struct FeatureUpstream {
    Matrix d_features;       // dL/dv
    Matrix d_unit_features;  // dL/dv_hat
    Matrix d_logits;         // dL/dz
};

struct ParamGrads {
    std::vector<Layer> layers;
};

ParamGrads zero_grads(const ModelParams& params);

/// Exact analytic gradients of the scalar represented by `upstream` w.r.t.
/// every parameter, summed over the batch. Feature-layer gradients do not
/// touch the classifier layer.
ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    const FeatureUpstream& upstream);

struct OptimState {
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t total_epochs = 100;
    std::size_t warmup_epochs = 10;
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::vector<Layer> buffers;  // momentum buffers, same shapes as params
    Matrix proto_buffer;         // momentum buffer for prototypes, sized lazily
};

OptimState make_optim_state(const ModelParams& params, double lr0, double momentum,
                            double weight_decay, std::size_t total_epochs,
                            std::size_t warmup_epochs);

/// Cosine annealing: lr(e) = 0.5 * lr0 * (1 + cos(pi * e / T)).
double lr_at(const OptimState& opt, std::size_t epoch);

/// buffer <- momentum * buffer + (grad + weight_decay * param);
/// param <- param - lr * buffer. Shared by model weights and prototypes.
void sgd_momentum_update(std::vector<double>& param, const std::vector<double>& grad,
                         std::vector<double>& buffer, double lr, double momentum,
                         double weight_decay);

/// Applies one update at lr_at(opt, opt.epoch) to every layer and advances
/// the step counter.
void sgd_momentum_step(ModelParams& params, const ParamGrads& grads, OptimState& opt);

// JSON checkpoint (decimal mode): round-trips parameters exactly.
void save_model_json(const ModelParams& params, const std::string& path);
ModelParams load_model_json(const std::string& path);

}  // namespace cpr
