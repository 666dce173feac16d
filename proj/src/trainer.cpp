#include "cpr/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace cpr {

std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::None: return "none";
        case Arm::Excpr: return "excpr";
        case Arm::Decov: return "decov";
        case Arm::Orthoreg: return "orthoreg";
        case Arm::Squentropy: return "squentropy";
    }
    return "none";
}

Arm arm_from_name(const std::string& name) {
    if (name == "none") return Arm::None;
    if (name == "excpr") return Arm::Excpr;
    if (name == "decov") return Arm::Decov;
    if (name == "orthoreg") return Arm::Orthoreg;
    if (name == "squentropy") return Arm::Squentropy;
    throw ConfigError("unknown arm: " + name);
}

void TrainConfig::validate() const {
    if (epochs == 0) {
        throw ConfigError("epochs must be positive");
    }
    if (warmup >= epochs) {
        throw ConfigError("warmup (" + std::to_string(warmup) + ") must be below epochs (" +
                          std::to_string(epochs) + ")");
    }
    if (beta < 0.0 || gamma < 0.0 || zeta < 0.0 || !std::isfinite(beta) ||
        !std::isfinite(gamma) || !std::isfinite(zeta)) {
        throw ConfigError("loss weights must be finite and >= 0");
    }
    if (lr0 < 0.0 || !std::isfinite(lr0)) {
        throw ConfigError("lr0 must be finite and >= 0");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ConfigError("momentum must lie in [0, 1)");
    }
    if (weight_decay < 0.0) {
        throw ConfigError("weight_decay must be >= 0");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (hidden_widths.empty()) {
        throw ConfigError("need at least one hidden layer");
    }
    for (std::size_t w : hidden_widths) {
        if (w == 0) {
            throw ConfigError("hidden widths must be positive");
        }
    }
    if (baselines.decov_weight < 0.0 || baselines.orthoreg_weight < 0.0) {
        throw ConfigError("baseline weights must be >= 0");
    }
    try {
        cov.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

TotalLossResult total_loss(const ForwardTrace& trace, const std::vector<int>& labels,
                           const PrototypeSet& proto, const TrainConfig& cfg,
                           SeededRng& cov_rng, bool regularizers_active) {
    const std::size_t n = trace.batch_size();
    if (labels.size() != n) {
        throw DimensionMismatchError("total_loss: label count vs batch size");
    }
    const std::size_t K = trace.logits().cols();
    const std::size_t J = trace.features().cols();

    const bool excpr = regularizers_active && cfg.arm == Arm::Excpr;
    const double beta = excpr ? cfg.beta : 0.0;
    const double gamma = excpr ? cfg.gamma : 0.0;
    const double zeta = excpr ? cfg.zeta : 0.0;
    const bool use_decov = regularizers_active && cfg.arm == Arm::Decov;
    const bool use_squent = regularizers_active && cfg.arm == Arm::Squentropy;
    if ((beta > 0.0 || gamma > 0.0 || zeta > 0.0) && !proto.initialized) {
        throw PrototypesUninitializedError("total_loss: prototype-dependent weights active");
    }

    TotalLossResult res;
    res.upstream.d_logits = Matrix(n, K);
    res.upstream.d_unit_features = Matrix(n, J);
    if (proto.initialized) {
        res.proto_grad = Matrix(proto.num_classes(), proto.dim());
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const Matrix& features = trace.features();

    // Prototypes that collapsed to zero norm have no direction; the angular
    // losses skip them until they move away from the origin.
    std::vector<bool> live;
    std::vector<std::size_t> live_classes;
    if (proto.initialized) {
        live.resize(proto.num_classes(), false);
        for (std::size_t k = 0; k < proto.num_classes(); ++k) {
            live[k] = norm(proto.prototype(k)) > kEpsNorm;
            if (live[k]) live_classes.push_back(k);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= K) {
            throw LabelOutOfRangeError("total_loss: label " + std::to_string(label));
        }
        const auto k = static_cast<std::size_t>(label);
        const Vector logits = trace.logits().row(i);
        if (use_squent) {
            const SquentropyResult sq = squentropy_loss(logits, k);
            res.breakdown.ce += sq.ce_part * inv_n;
            res.breakdown.aux += sq.penalty_part * inv_n;
            res.upstream.d_logits.axpy_row(i, sq.d_logits, inv_n);
        } else {
            const CrossEntropyResult ce = cross_entropy(logits, k);
            res.breakdown.ce += ce.loss * inv_n;
            res.upstream.d_logits.axpy_row(i, ce.d_logits, inv_n);
        }

        if (beta == 0.0 && gamma == 0.0) continue;
        const Vector v = features.row(i);
        if (!(norm(v) > kEpsNorm) || !live[k]) {
            // Degenerate feature vector or prototype: nothing to regularize.
            ++res.skipped;
            continue;
        }
        if (beta > 0.0) {
            const ProtoLossResult pl = proto_loss(v, proto, k, cfg.proto_form);
            res.breakdown.proto += pl.loss * inv_n;
            if (pl.wrt_unit) {
                res.upstream.d_unit_features.axpy_row(i, pl.d_feature, beta * inv_n);
                res.proto_grad.axpy_row(
                    k, normalize_pullback(proto.prototype(k), pl.d_prototype), beta * inv_n);
            } else {
                if (res.upstream.d_features.empty()) {
                    res.upstream.d_features = Matrix(n, J);
                }
                res.upstream.d_features.axpy_row(i, pl.d_feature, beta * inv_n);
                res.proto_grad.axpy_row(k, pl.d_prototype, beta * inv_n);
            }
            res.proto_grad_nonzero = true;
        }
        if (gamma > 0.0) {
            const CovLossResult cl = cov_loss_single(v, proto, k, cfg.cov, cov_rng);
            res.breakdown.cov += cl.loss * inv_n;
            res.upstream.d_unit_features.axpy_row(i, cl.d_unit_feature, gamma * inv_n);
        }
    }

    if (zeta > 0.0 && live_classes.size() >= 2) {
        PrototypeSet live_set;
        live_set.values = Matrix(live_classes.size(), proto.dim());
        for (std::size_t idx = 0; idx < live_classes.size(); ++idx) {
            live_set.values.set_row(idx, proto.prototype(live_classes[idx]));
        }
        live_set.grad = Matrix(live_classes.size(), proto.dim());
        live_set.counts.assign(live_classes.size(), 0);
        live_set.initialized = true;
        const CsLossResult cs = cs_loss(live_set);
        res.breakdown.cs = cs.loss;
        for (std::size_t idx = 0; idx < live_classes.size(); ++idx) {
            const std::size_t k = live_classes[idx];
            res.proto_grad.axpy_row(
                k, normalize_pullback(proto.prototype(k), cs.d_unit.row(idx)), zeta);
        }
        res.proto_grad_nonzero = true;
    }

    if (use_decov && n >= 2) {
        const DecovResult dc = decov_loss(features);
        res.breakdown.aux += cfg.baselines.decov_weight * dc.loss;
        if (res.upstream.d_features.empty()) {
            res.upstream.d_features = Matrix(n, J);
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < J; ++j) {
                res.upstream.d_features(i, j) +=
                    cfg.baselines.decov_weight * dc.d_features(i, j);
            }
        }
    }

    res.breakdown.total = res.breakdown.ce + beta * res.breakdown.proto +
                          gamma * res.breakdown.cov + zeta * res.breakdown.cs +
                          res.breakdown.aux;
    // additivity invariant; non-finite totals abort later with context
    assert(!std::isfinite(res.breakdown.total) ||
           std::abs(res.breakdown.total -
                    (res.breakdown.ce + beta * res.breakdown.proto +
                     gamma * res.breakdown.cov + zeta * res.breakdown.cs +
                     res.breakdown.aux)) <= 1e-10);
    return res;
}

double evaluate(const ModelParams& params, const Matrix& inputs,
                const std::vector<int>& labels) {
    if (inputs.rows() == 0) {
        throw EmptyInputError("evaluate: empty dataset");
    }
    if (inputs.rows() != labels.size()) {
        throw DimensionMismatchError("evaluate: rows vs labels");
    }
    const std::size_t chunk = 512;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < inputs.rows(); start += chunk) {
        const std::size_t stop = std::min(inputs.rows(), start + chunk);
        Matrix block(stop - start, inputs.cols());
        for (std::size_t i = start; i < stop; ++i) {
            for (std::size_t c = 0; c < inputs.cols(); ++c) {
                block(i - start, c) = inputs(i, c);
            }
        }
        const ForwardTrace trace = forward(params, block);
        const Matrix& logits = trace.logits();
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols(); ++j) {
                if (logits(i, j) > logits(i, best)) best = j;
            }
            if (static_cast<int>(best) == labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(inputs.rows());
}

Matrix extract_features(const ModelParams& params, const Matrix& inputs) {
    const std::size_t chunk = 512;
    Matrix out(inputs.rows(), params.feature_dim());
    for (std::size_t start = 0; start < inputs.rows(); start += chunk) {
        const std::size_t stop = std::min(inputs.rows(), start + chunk);
        Matrix block(stop - start, inputs.cols());
        for (std::size_t i = start; i < stop; ++i) {
            for (std::size_t c = 0; c < inputs.cols(); ++c) {
                block(i - start, c) = inputs(i, c);
            }
        }
        const ForwardTrace trace = forward(params, block);
        for (std::size_t i = 0; i < trace.features().rows(); ++i) {
            for (std::size_t j = 0; j < trace.features().cols(); ++j) {
                out(start + i, j) = trace.features()(i, j);
            }
        }
    }
    return out;
}

namespace {

// Per-split components. Class means include every sample; the covariance
// and similarity statistics can only cover samples and classes with a
// nonzero direction, so zero-norm feature rows and collapsed class means are
// excluded (their stats become NaN and drop out of the split averages).
CprSplitStats split_cpr_stats(const Matrix& features, const std::vector<int>& labels,
                              std::size_t num_classes, const PrototypeSet& learned) {
    const PrototypeSet split_protos = prototypes_from_features(features, labels, num_classes);
    std::vector<bool> live(num_classes);
    std::vector<std::size_t> live_classes;
    for (std::size_t k = 0; k < num_classes; ++k) {
        live[k] = norm(split_protos.prototype(k)) > kEpsNorm;
        if (live[k]) live_classes.push_back(k);
    }

    CprSplitStats stats;
    stats.per_class.reserve(num_classes);
    std::size_t included = 0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < num_classes; ++k) {
        ClassCprStats cs;
        cs.class_id = k;
        const Vector mean_proto = split_protos.prototype(k);

        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (static_cast<std::size_t>(labels[i]) != k) continue;
            if (norm(features.row(i)) > kEpsNorm) idx.push_back(i);
        }
        cs.count = idx.size();

        if (!live[k] || idx.empty() || live_classes.size() < 2) {
            cs.sum_s = nan;
            cs.ds = nan;
            cs.ds2 = nan;
            cs.diag_trace = nan;
            cs.two_sided = nan;
            cs.one_sided = nan;
            cs.cpr = nan;
            stats.per_class.push_back(cs);
            continue;
        }

        Matrix class_feats(idx.size(), features.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < features.cols(); ++j) {
                class_feats(i, j) = features(idx[i], j);
            }
        }
        const CovMatrix s = cov_matrix_oracle(class_feats, mean_proto);
        cs.sum_s = ones_quadratic_form(s);
        for (std::size_t j = 0; j < s.rows(); ++j) cs.diag_trace += s(j, j);

        double cs_sum = 0.0;
        for (const std::size_t other : live_classes) {
            if (other == k) continue;
            cs_sum += cosine_similarity(mean_proto, split_protos.prototype(other));
        }
        cs.ds = 1.0 - cs_sum / static_cast<double>(live_classes.size() - 1);
        cs.ds2 = cs.ds * cs.ds;
        if (cs.ds > 0.0) {
            cs.two_sided = chebyshev_two_sided(cs.sum_s, cs.ds);
            cs.one_sided = cantelli_one_sided(cs.sum_s, cs.ds);
            cs.cpr = cs.two_sided;
        } else {
            cs.two_sided = nan;
            cs.one_sided = nan;
            cs.cpr = nan;
        }
        if (learned.initialized && norm(learned.prototype(k)) > kEpsNorm) {
            cs.proto_alignment = cosine_similarity(learned.prototype(k), mean_proto);
        }
        stats.mean_sum_s += cs.sum_s;
        stats.mean_ds2 += cs.ds2;
        stats.mean_diag += cs.diag_trace;
        ++included;
        stats.per_class.push_back(cs);
    }
    if (included > 0) {
        const double inv = 1.0 / static_cast<double>(included);
        stats.mean_sum_s *= inv;
        stats.mean_ds2 *= inv;
        stats.mean_diag *= inv;
    } else {
        stats.mean_sum_s = nan;
        stats.mean_ds2 = nan;
        stats.mean_diag = nan;
    }
    return stats;
}

}  // namespace

CprReport cpr_report(const ModelParams& params, const PrototypeSet& learned,
                     const Matrix& train_inputs, const std::vector<int>& train_labels,
                     const Matrix& test_inputs, const std::vector<int>& test_labels,
                     std::size_t num_classes) {
    if (train_inputs.rows() == 0 || test_inputs.rows() == 0) {
        throw EmptyInputError("cpr_report: empty split");
    }
    CprReport report;
    const Matrix train_feats = extract_features(params, train_inputs);
    const Matrix test_feats = extract_features(params, test_inputs);
    report.train = split_cpr_stats(train_feats, train_labels, num_classes, learned);
    report.test = split_cpr_stats(test_feats, test_labels, num_classes, learned);
    report.cov_gap = report.test.mean_sum_s - report.train.mean_sum_s;
    report.ds2_gap = report.train.mean_ds2 - report.test.mean_ds2;
    report.train_accuracy = evaluate(params, train_inputs, train_labels);
    report.test_accuracy = evaluate(params, test_inputs, test_labels);
    return report;
}

namespace {

CprPeriodic periodic_snapshot(std::size_t epoch, const ModelParams& params,
                              const PrototypeSet& learned, const Matrix& train_inputs,
                              const std::vector<int>& train_labels, const Matrix& test_inputs,
                              const std::vector<int>& test_labels, std::size_t num_classes) {
    const CprReport rep = cpr_report(params, learned, train_inputs, train_labels, test_inputs,
                                     test_labels, num_classes);
    CprPeriodic p;
    p.epoch = epoch;
    p.train_sum_s = rep.train.mean_sum_s;
    p.train_ds2 = rep.train.mean_ds2;
    p.train_diag = rep.train.mean_diag;
    p.test_sum_s = rep.test.mean_sum_s;
    p.test_ds2 = rep.test.mean_ds2;
    p.test_diag = rep.test.mean_diag;
    return p;
}

bool grads_finite(const ParamGrads& grads) {
    for (const Layer& layer : grads.layers) {
        if (!all_finite(layer.weights) || !all_finite(layer.bias)) return false;
    }
    return true;
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const Dataset& train, const Dataset& test) {
    cfg.validate();
    train.validate();
    test.validate();
    if (train.num_classes != test.num_classes) {
        throw InvalidParamError("train_run: class counts differ between splits");
    }
    if (train.input_dim() != test.input_dim()) {
        throw DimensionMismatchError("train_run: input widths differ between splits");
    }

    const std::size_t K = train.num_classes;
    TrainResult res;
    if (cfg.standardize) {
        res.standardizer = Standardizer::fit(train.inputs);
    } else {
        res.standardizer.mean.assign(train.input_dim(), 0.0);
        res.standardizer.inv_std.assign(train.input_dim(), 1.0);
    }
    const Matrix x_train = res.standardizer.apply(train.inputs);
    const Matrix x_test = res.standardizer.apply(test.inputs);

    std::vector<std::size_t> widths;
    widths.push_back(train.input_dim());
    widths.insert(widths.end(), cfg.hidden_widths.begin(), cfg.hidden_widths.end());
    widths.push_back(K);
    res.params = init_model(widths, cfg.activation, SeededRng::derive(cfg.seed, 1));

    OptimState opt = make_optim_state(res.params, cfg.lr0, cfg.momentum, cfg.weight_decay,
                                      cfg.epochs, cfg.warmup);
    SeededRng shuffle_rng(SeededRng::derive(cfg.seed, 2));
    SeededRng cov_rng(SeededRng::derive(cfg.seed, 3));

    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.epoch = epoch;
        const bool active = epoch >= cfg.warmup;
        if (epoch == cfg.warmup && cfg.arm == Arm::Excpr) {
            res.prototypes = init_prototypes_from_means(res.params, x_train, train.labels, K);
            opt.proto_buffer = Matrix(K, res.params.feature_dim());
        }
        shuffle_indices(order, shuffle_rng);

        LossBreakdown epoch_losses;
        epoch_losses.epoch = epoch;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::size_t m = stop - start;
            Matrix xb(m, x_train.cols());
            std::vector<int> yb(m);
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t src = order[start + i];
                for (std::size_t c = 0; c < x_train.cols(); ++c) {
                    xb(i, c) = x_train(src, c);
                }
                yb[i] = train.labels[src];
            }

            const ForwardTrace trace = forward(res.params, xb);
            TotalLossResult batch =
                total_loss(trace, yb, res.prototypes, cfg, cov_rng, active);
            batch.breakdown.epoch = epoch;
            batch.breakdown.batch = batch_index;
            res.skipped_feature_samples += batch.skipped;

            ParamGrads grads = backward(res.params, trace, batch.upstream);

            if (active && cfg.arm == Arm::Orthoreg) {
                Layer& feature_layer = grads.layers[grads.layers.size() - 2];
                const OrthoregResult ortho =
                    orthoreg_cost(res.params.layers[res.params.layers.size() - 2].weights,
                                  cfg.baselines.orthoreg_mode);
                const double w = cfg.baselines.orthoreg_weight;
                for (std::size_t i = 0; i < feature_layer.weights.data().size(); ++i) {
                    feature_layer.weights.data()[i] += w * ortho.d_weights.data()[i];
                }
                batch.breakdown.aux += w * ortho.loss;
                batch.breakdown.total += w * ortho.loss;
            }

            if (!std::isfinite(batch.breakdown.total) || !grads_finite(grads)) {
                throw NonFiniteLossError("non-finite loss or gradient at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_index));
            }

            sgd_momentum_step(res.params, grads, opt);
            if (batch.proto_grad_nonzero) {
                const double lr = lr_at(opt, epoch);
                sgd_momentum_update(res.prototypes.values.data(), batch.proto_grad.data(),
                                    opt.proto_buffer.data(), lr, cfg.momentum, 0.0);
            }

            const double w = static_cast<double>(m) / static_cast<double>(n);
            epoch_losses.ce += w * batch.breakdown.ce;
            epoch_losses.proto += w * batch.breakdown.proto;
            epoch_losses.cov += w * batch.breakdown.cov;
            epoch_losses.cs += w * batch.breakdown.cs;
            epoch_losses.aux += w * batch.breakdown.aux;
            epoch_losses.total += w * batch.breakdown.total;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.losses = epoch_losses;
        record.lr = lr_at(opt, epoch);
        record.train_acc = evaluate(res.params, x_train, train.labels);
        record.test_acc = evaluate(res.params, x_test, test.labels);
        res.history.push_back(record);

        if (cfg.report_every > 0 && active &&
            ((epoch - cfg.warmup) % cfg.report_every == 0 || epoch + 1 == cfg.epochs)) {
            res.periodic.push_back(periodic_snapshot(epoch, res.params, res.prototypes,
                                                     x_train, train.labels, x_test,
                                                     test.labels, K));
        }
    }

    if (!res.prototypes.initialized) {
        res.prototypes = init_prototypes_from_means(res.params, x_train, train.labels, K);
    }
    res.report = cpr_report(res.params, res.prototypes, x_train, train.labels, x_test,
                            test.labels, K);
    res.report.arm = arm_name(cfg.arm);
    res.train_accuracy = res.report.train_accuracy;
    res.test_accuracy = res.report.test_accuracy;
    return res;
}

SuiteResult experiment_suite(const SuiteConfig& cfg, const Dataset& train_source,
                             const Dataset& test) {
    if (cfg.arms.empty()) {
        throw ConfigError("experiment_suite: no arms configured");
    }
    if (cfg.draws == 0) {
        throw ConfigError("experiment_suite: draws must be positive");
    }
    cfg.base.validate();

    SuiteResult result;
    result.plan = stratified_subsets(train_source, cfg.draws, cfg.fraction,
                                     SeededRng::derive(cfg.base.seed, 0x5B5E75));
    const std::size_t total_runs = cfg.arms.size() * cfg.draws;
    result.runs.resize(total_runs);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t task = next.fetch_add(1);
            if (task >= total_runs) break;
            const std::size_t arm_idx = task / cfg.draws;
            const std::size_t draw = task % cfg.draws;
            TrainConfig run_cfg = cfg.base;
            run_cfg.arm = cfg.arms[arm_idx];
            // Paired seeds: the run seed depends on the draw only.
            run_cfg.seed = SeededRng::derive(cfg.base.seed, 1000 + draw);
            const Dataset subset = train_source.select(result.plan.subsets[draw]);
            const TrainResult run = train_run(run_cfg, subset, test);

            RunResult& slot = result.runs[task];
            slot.arm = arm_name(run_cfg.arm);
            slot.draw = draw;
            slot.seed = run_cfg.seed;
            slot.test_accuracy = run.test_accuracy;
            slot.train_accuracy = run.train_accuracy;
            slot.report = run.report;
            slot.history = run.history;
            slot.periodic = run.periodic;
        }
    };

    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }

    for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
        ArmSummary summary;
        summary.arm = arm_name(cfg.arms[a]);
        double mean = 0.0;
        double min_acc = 1.0;
        for (std::size_t d = 0; d < cfg.draws; ++d) {
            const double acc = result.runs[a * cfg.draws + d].test_accuracy;
            mean += acc;
            min_acc = std::min(min_acc, acc);
        }
        mean /= static_cast<double>(cfg.draws);
        double var = 0.0;
        for (std::size_t d = 0; d < cfg.draws; ++d) {
            const double dev = result.runs[a * cfg.draws + d].test_accuracy - mean;
            var += dev * dev;
        }
        var /= static_cast<double>(cfg.draws);
        summary.mean = mean;
        summary.stddev = std::sqrt(var);
        summary.min = min_acc;
        result.summaries.push_back(summary);
    }
    return result;
}

}  // namespace cpr
