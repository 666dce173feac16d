#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpr/baselines.hpp"
#include "cpr/covariance.hpp"
#include "cpr/data.hpp"
#include "cpr/model.hpp"
#include "cpr/prototypes.hpp"

namespace cpr {

enum class Arm { None, Excpr, Decov, Orthoreg, Squentropy };

std::string arm_name(Arm arm);
Arm arm_from_name(const std::string& name);

struct TrainConfig {
    // exCPR loss weights, applied after warmup when arm == Excpr.
    double beta = 1.0;
    double gamma = 10.0;
    double zeta = 1.0;
    CovLossConfig cov;
    ProtoLossForm proto_form = ProtoLossForm::Normalized;

    std::size_t epochs = 100;
    std::size_t warmup = 10;
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t batch_size = 128;

    Arm arm = Arm::None;
    BaselineConfig baselines;

    // Feature extractor widths after the input layer; the last entry is J.
    std::vector<std::size_t> hidden_widths = {64, 32};
    Activation activation = Activation::ReLU;
    bool standardize = true;

    std::uint64_t seed = 1;
    std::size_t report_every = 0;  // 0: CPR components only at the end

    void validate() const;  // throws ConfigError
};

struct LossBreakdown {
    double ce = 0.0;
    double proto = 0.0;
    double cov = 0.0;
    double cs = 0.0;
    double aux = 0.0;  // weighted baseline term (decov/orthoreg/squentropy penalty)
    double total = 0.0;
    std::size_t epoch = 0;
    std::size_t batch = 0;
};

struct TotalLossResult {
    LossBreakdown breakdown;
    FeatureUpstream upstream;
    Matrix proto_grad;  // batch-mean prototype gradient, K x J
    bool proto_grad_nonzero = false;
    std::size_t skipped = 0;  // samples whose feature norm was too small
};

/// Assembles L = L_CE + beta L_proto + gamma L_cov + zeta L_CS for one batch
/// (plus the decov/squentropy baseline terms when those arms are selected).
/// Upstream gradients are scaled so they represent the batch-mean loss.
/// With regularizers_active false only cross-entropy contributes.
TotalLossResult total_loss(const ForwardTrace& trace, const std::vector<int>& labels,
                           const PrototypeSet& proto, const TrainConfig& cfg,
                           SeededRng& cov_rng, bool regularizers_active);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown losses;  // sample-weighted mean over the epoch's batches
    double lr = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

/// Compact CPR component snapshot recorded every report_every epochs.
struct CprPeriodic {
    std::size_t epoch = 0;
    double train_sum_s = 0.0, train_ds2 = 0.0, train_diag = 0.0;
    double test_sum_s = 0.0, test_ds2 = 0.0, test_diag = 0.0;
};

struct ClassCprStats {
    std::size_t class_id = 0;
    std::size_t count = 0;
    double sum_s = 0.0;
    double ds = 0.0;
    double ds2 = 0.0;
    double diag_trace = 0.0;
    double two_sided = 0.0;
    double one_sided = 0.0;
    double cpr = 0.0;
    double proto_alignment = 0.0;  // CS(learned prototype, split class mean)
};

struct CprSplitStats {
    std::vector<ClassCprStats> per_class;
    double mean_sum_s = 0.0;
    double mean_ds2 = 0.0;
    double mean_diag = 0.0;
};

/// Per-split covariance/dissimilarity components in the Table-5 sign
/// convention: cov gap = test - train, DS^2 gap = train - test.
struct CprReport {
    std::string arm;
    CprSplitStats train;
    CprSplitStats test;
    double cov_gap = 0.0;
    double ds2_gap = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

struct TrainResult {
    ModelParams params;
    PrototypeSet prototypes;
    std::vector<EpochRecord> history;
    std::vector<CprPeriodic> periodic;
    CprReport report;
    Standardizer standardizer;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t skipped_feature_samples = 0;
};

/// Warmup-gated training: epochs before `warmup` use cross-entropy only;
/// prototypes are initialized from class means at the end of warmup, after
/// which the configured arm's full loss applies on a cosine-annealed
/// schedule. Aborts with NonFiniteLossError (naming epoch and batch) if the
/// loss or any gradient stops being finite.
TrainResult train_run(const TrainConfig& cfg, const Dataset& train, const Dataset& test);

/// Argmax-logit accuracy; ties resolve to the lowest class index.
double evaluate(const ModelParams& params, const Matrix& inputs,
                const std::vector<int>& labels);

/// Penultimate features for every row, computed in fixed-size chunks.
Matrix extract_features(const ModelParams& params, const Matrix& inputs);

/// Exact-oracle CPR components for both splits. Each split uses its own
/// class-mean prototypes, so the DS^2 columns behave like Table-5 reports;
/// `learned` (when initialized) only feeds the per-class alignment field.
CprReport cpr_report(const ModelParams& params, const PrototypeSet& learned,
                     const Matrix& train_inputs, const std::vector<int>& train_labels,
                     const Matrix& test_inputs, const std::vector<int>& test_labels,
                     std::size_t num_classes);

struct SuiteConfig {
    TrainConfig base;
    std::vector<Arm> arms = {Arm::None, Arm::Excpr};
    std::size_t draws = 12;
    double fraction = 0.5;
    int threads = 1;
};

struct RunResult {
    std::string arm;
    std::size_t draw = 0;
    std::uint64_t seed = 0;
    double test_accuracy = 0.0;
    double train_accuracy = 0.0;
    CprReport report;
    std::vector<EpochRecord> history;
    std::vector<CprPeriodic> periodic;
};

struct ArmSummary {
    std::string arm;
    double mean = 0.0;
    double stddev = 0.0;  // population (divide by n)
    double min = 0.0;
};

struct SuiteResult {
    std::vector<RunResult> runs;  // ordered by (arm position, draw)
    std::vector<ArmSummary> summaries;
    SubsetPlan plan;
};

/// Runs every arm on the same stratified subset plan with paired per-draw
/// seeds, so arms differ only in their loss. threads > 1 distributes runs;
/// aggregation order is fixed regardless of scheduling.
SuiteResult experiment_suite(const SuiteConfig& cfg, const Dataset& train_source,
                             const Dataset& test);

}  // namespace cpr
