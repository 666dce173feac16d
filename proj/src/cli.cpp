#include "cpr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpr/covariance.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cpr {

namespace {

std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string fmt_fixed(double x, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
    return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            if (it.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("unknown config key: " + section + "." + it.key());
        }
    }
}

template <typename T>
void read_into(const json& obj, const char* key, T& target, const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for " + section + "." + std::string(key));
    }
}

void parse_data_section(const json& obj, DataConfig& cfg) {
    check_keys(obj, "data",
               {"source", "csv_path", "test_csv_path", "classes", "dim", "n_per_class",
                "test_per_class", "spread", "overlap", "label_noise", "seed"});
    read_into(obj, "source", cfg.source, "data");
    read_into(obj, "csv_path", cfg.csv_path, "data");
    read_into(obj, "test_csv_path", cfg.test_csv_path, "data");
    read_into(obj, "classes", cfg.classes, "data");
    read_into(obj, "dim", cfg.dim, "data");
    read_into(obj, "n_per_class", cfg.n_per_class, "data");
    read_into(obj, "test_per_class", cfg.test_per_class, "data");
    read_into(obj, "spread", cfg.spread, "data");
    read_into(obj, "overlap", cfg.overlap, "data");
    read_into(obj, "label_noise", cfg.label_noise, "data");
    read_into(obj, "seed", cfg.seed, "data");
}

void parse_train_section(const json& obj, TrainConfig& cfg) {
    check_keys(obj, "train",
               {"beta", "gamma", "zeta", "nu", "r_max", "pad_mode", "sort_order",
                "proto_loss", "epochs", "warmup", "lr0", "momentum", "weight_decay",
                "batch_size", "arm", "decov_weight", "orthoreg_mode", "orthoreg_weight",
                "hidden_widths", "activation", "standardize", "seed", "report_every"});
    read_into(obj, "beta", cfg.beta, "train");
    read_into(obj, "gamma", cfg.gamma, "train");
    read_into(obj, "zeta", cfg.zeta, "train");
    read_into(obj, "nu", cfg.cov.nu, "train");
    read_into(obj, "r_max", cfg.cov.r_max, "train");
    if (obj.contains("pad_mode")) {
        const auto mode = obj.at("pad_mode").get<std::string>();
        if (mode == "fixed") {
            cfg.cov.pad_mode = PadMode::Fixed;
        } else if (mode == "uniform") {
            cfg.cov.pad_mode = PadMode::Uniform;
        } else {
            throw ConfigError("train.pad_mode must be 'fixed' or 'uniform'");
        }
    }
    if (obj.contains("sort_order")) {
        const auto order = obj.at("sort_order").get<std::string>();
        if (order == "ascending") {
            cfg.cov.sort_order = SortOrder::Ascending;
        } else if (order == "descending") {
            cfg.cov.sort_order = SortOrder::Descending;
        } else {
            throw ConfigError("train.sort_order must be 'ascending' or 'descending'");
        }
    }
    if (obj.contains("proto_loss")) {
        const auto form = obj.at("proto_loss").get<std::string>();
        if (form == "normalized") {
            cfg.proto_form = ProtoLossForm::Normalized;
        } else if (form == "unnormalized") {
            cfg.proto_form = ProtoLossForm::Unnormalized;
        } else {
            throw ConfigError("train.proto_loss must be 'normalized' or 'unnormalized'");
        }
    }
    read_into(obj, "epochs", cfg.epochs, "train");
    read_into(obj, "warmup", cfg.warmup, "train");
    read_into(obj, "lr0", cfg.lr0, "train");
    read_into(obj, "momentum", cfg.momentum, "train");
    read_into(obj, "weight_decay", cfg.weight_decay, "train");
    read_into(obj, "batch_size", cfg.batch_size, "train");
    if (obj.contains("arm")) {
        cfg.arm = arm_from_name(obj.at("arm").get<std::string>());
    }
    read_into(obj, "decov_weight", cfg.baselines.decov_weight, "train");
    if (obj.contains("orthoreg_mode")) {
        cfg.baselines.orthoreg_mode =
            orthoreg_mode_from_name(obj.at("orthoreg_mode").get<std::string>());
    }
    read_into(obj, "orthoreg_weight", cfg.baselines.orthoreg_weight, "train");
    read_into(obj, "hidden_widths", cfg.hidden_widths, "train");
    if (obj.contains("activation")) {
        cfg.activation = activation_from_name(obj.at("activation").get<std::string>());
    }
    read_into(obj, "standardize", cfg.standardize, "train");
    read_into(obj, "seed", cfg.seed, "train");
    read_into(obj, "report_every", cfg.report_every, "train");
}

}  // namespace

void CliConfig::validate() const {
    train.validate();
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ConfigError("suite.fraction must lie in (0, 1]");
    }
    if (draws == 0) {
        throw ConfigError("suite.draws must be positive");
    }
    if (arms.empty()) {
        throw ConfigError("suite.arms must not be empty");
    }
    if (data.source != "synthetic" && data.source != "csv") {
        throw ConfigError("data.source must be 'synthetic' or 'csv'");
    }
    if (data.source == "csv" && data.csv_path.empty()) {
        throw ConfigError("data.csv_path required for csv source");
    }
    if (data.source == "synthetic") {
        if (data.classes < 2) {
            throw ConfigError("data.classes must be >= 2");
        }
        if (data.label_noise < 0.0 || data.label_noise > 1.0) {
            throw ConfigError("data.label_noise must lie in [0, 1]");
        }
    }
}

CliConfig parse_config_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError(origin + ": top level must be a JSON object");
    }
    check_keys(doc, "config", {"data", "train", "suite", "output"});
    CliConfig cfg;
    if (doc.contains("data")) parse_data_section(doc.at("data"), cfg.data);
    if (doc.contains("train")) parse_train_section(doc.at("train"), cfg.train);
    if (doc.contains("suite")) {
        const json& s = doc.at("suite");
        check_keys(s, "suite", {"arms", "draws", "fraction"});
        if (s.contains("arms")) {
            cfg.arms.clear();
            for (const auto& name : s.at("arms")) {
                cfg.arms.push_back(arm_from_name(name.get<std::string>()));
            }
        }
        read_into(s, "draws", cfg.draws, "suite");
        read_into(s, "fraction", cfg.fraction, "suite");
    }
    if (doc.contains("output")) {
        const json& o = doc.at("output");
        check_keys(o, "output", {"dir", "write_history", "write_plots", "dump_features"});
        read_into(o, "dir", cfg.out_dir, "output");
        read_into(o, "write_history", cfg.write_history, "output");
        if (o.contains("write_plots")) {
            cfg.write_plots = o.at("write_plots").get<bool>();
        }
        read_into(o, "dump_features", cfg.dump_features, "output");
    }
    return cfg;
}

CliConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::pair<Dataset, Dataset> make_datasets(const DataConfig& cfg) {
    if (cfg.source == "csv") {
        if (cfg.csv_path.empty() || cfg.test_csv_path.empty()) {
            throw ConfigError("csv source needs data.csv_path and data.test_csv_path");
        }
        Dataset train = load_csv_dataset(cfg.csv_path);
        Dataset test = load_csv_dataset(cfg.test_csv_path, train.label_names);
        test.num_classes = train.num_classes;
        test.validate();
        return {std::move(train), std::move(test)};
    }
    Dataset full = generate_blobs(cfg.classes, cfg.dim, cfg.n_per_class + cfg.test_per_class,
                                  cfg.spread, cfg.overlap, cfg.seed, 0.0);
    auto [train, test] = split_per_class(full, cfg.test_per_class);
    if (cfg.label_noise > 0.0) {
        flip_labels(train, cfg.label_noise, SeededRng::derive(cfg.seed, 0xF11B));
    }
    return {std::move(train), std::move(test)};
}

namespace {

json data_config_json(const DataConfig& cfg) {
    json j;
    j["source"] = cfg.source;
    j["csv_path"] = cfg.csv_path;
    j["test_csv_path"] = cfg.test_csv_path;
    j["classes"] = cfg.classes;
    j["dim"] = cfg.dim;
    j["n_per_class"] = cfg.n_per_class;
    j["test_per_class"] = cfg.test_per_class;
    j["spread"] = cfg.spread;
    j["overlap"] = cfg.overlap;
    j["label_noise"] = cfg.label_noise;
    j["seed"] = cfg.seed;
    return j;
}

json train_config_json(const TrainConfig& cfg) {
    json j;
    j["beta"] = cfg.beta;
    j["gamma"] = cfg.gamma;
    j["zeta"] = cfg.zeta;
    j["nu"] = cfg.cov.nu;
    j["r_max"] = cfg.cov.r_max;
    j["pad_mode"] = cfg.cov.pad_mode == PadMode::Fixed ? "fixed" : "uniform";
    j["sort_order"] =
        cfg.cov.sort_order == SortOrder::Ascending ? "ascending" : "descending";
    j["proto_loss"] =
        cfg.proto_form == ProtoLossForm::Normalized ? "normalized" : "unnormalized";
    j["epochs"] = cfg.epochs;
    j["warmup"] = cfg.warmup;
    j["lr0"] = cfg.lr0;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["arm"] = arm_name(cfg.arm);
    j["decov_weight"] = cfg.baselines.decov_weight;
    j["orthoreg_mode"] = orthoreg_mode_name(cfg.baselines.orthoreg_mode);
    j["orthoreg_weight"] = cfg.baselines.orthoreg_weight;
    j["hidden_widths"] = cfg.hidden_widths;
    j["activation"] = activation_name(cfg.activation);
    j["standardize"] = cfg.standardize;
    j["seed"] = cfg.seed;
    j["report_every"] = cfg.report_every;
    return j;
}

json config_echo_json(const CliConfig& cfg, bool resolved_plots) {
    json j;
    j["data"] = data_config_json(cfg.data);
    j["train"] = train_config_json(cfg.train);
    json suite;
    json arms = json::array();
    for (Arm arm : cfg.arms) arms.push_back(arm_name(arm));
    suite["arms"] = std::move(arms);
    suite["draws"] = cfg.draws;
    suite["fraction"] = cfg.fraction;
    j["suite"] = std::move(suite);
    json output;
    output["dir"] = cfg.out_dir;
    output["write_history"] = cfg.write_history;
    output["write_plots"] = resolved_plots;
    output["dump_features"] = cfg.dump_features;
    j["output"] = std::move(output);
    return j;
}

json class_stats_json(const ClassCprStats& cs) {
    json j;
    j["class"] = cs.class_id;
    j["count"] = cs.count;
    j["sum_s"] = cs.sum_s;
    j["ds"] = cs.ds;
    j["ds2"] = cs.ds2;
    j["diag_trace"] = cs.diag_trace;
    j["two_sided"] = cs.two_sided;
    j["one_sided"] = cs.one_sided;
    j["cpr"] = cs.cpr;
    j["proto_alignment"] = cs.proto_alignment;
    return j;
}

json split_stats_json(const CprSplitStats& stats) {
    json j;
    j["mean_sum_s"] = stats.mean_sum_s;
    j["mean_ds2"] = stats.mean_ds2;
    j["mean_diag"] = stats.mean_diag;
    return j;
}

json cpr_report_json(const CprReport& report) {
    json j;
    j["arm"] = report.arm;
    j["train"] = split_stats_json(report.train);
    j["test"] = split_stats_json(report.test);
    j["cov_gap"] = report.cov_gap;
    j["ds2_gap"] = report.ds2_gap;
    j["train_accuracy"] = report.train_accuracy;
    j["test_accuracy"] = report.test_accuracy;
    return j;
}

json bounds_json(const CprReport& report) {
    json j;
    json train = json::array();
    for (const ClassCprStats& cs : report.train.per_class) train.push_back(class_stats_json(cs));
    json test = json::array();
    for (const ClassCprStats& cs : report.test.per_class) test.push_back(class_stats_json(cs));
    j["train"] = std::move(train);
    j["test"] = std::move(test);
    return j;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,ce,proto,cov,cs,total,lr,train_acc,test_acc\n";
    for (const EpochRecord& rec : history) {
        out += std::to_string(rec.epoch);
        out += ',' + fmt_g17(rec.losses.ce);
        out += ',' + fmt_g17(rec.losses.proto);
        out += ',' + fmt_g17(rec.losses.cov);
        out += ',' + fmt_g17(rec.losses.cs);
        out += ',' + fmt_g17(rec.losses.total);
        out += ',' + fmt_g17(rec.lr);
        out += ',' + fmt_g17(rec.train_acc);
        out += ',' + fmt_g17(rec.test_acc);
        out += '\n';
    }
    return out;
}

std::string periodic_csv(const std::vector<CprPeriodic>& periodic) {
    std::string out =
        "epoch,train_sum_s,train_ds2,train_diag,test_sum_s,test_ds2,test_diag\n";
    for (const CprPeriodic& p : periodic) {
        out += std::to_string(p.epoch);
        out += ',' + fmt_g17(p.train_sum_s);
        out += ',' + fmt_g17(p.train_ds2);
        out += ',' + fmt_g17(p.train_diag);
        out += ',' + fmt_g17(p.test_sum_s);
        out += ',' + fmt_g17(p.test_ds2);
        out += ',' + fmt_g17(p.test_diag);
        out += '\n';
    }
    return out;
}

void write_plot_files(const fs::path& dir, const std::string& prefix,
                      const std::vector<EpochRecord>& history) {
    fs::create_directories(dir);
    const std::vector<std::pair<const char*, std::function<double(const EpochRecord&)>>>
        curves = {
            {"total", [](const EpochRecord& r) { return r.losses.total; }},
            {"ce", [](const EpochRecord& r) { return r.losses.ce; }},
            {"proto", [](const EpochRecord& r) { return r.losses.proto; }},
            {"cov", [](const EpochRecord& r) { return r.losses.cov; }},
            {"cs", [](const EpochRecord& r) { return r.losses.cs; }},
            {"aux", [](const EpochRecord& r) { return r.losses.aux; }},
            {"lr", [](const EpochRecord& r) { return r.lr; }},
            {"train_acc", [](const EpochRecord& r) { return r.train_acc; }},
            {"test_acc", [](const EpochRecord& r) { return r.test_acc; }},
        };
    for (const auto& [name, get] : curves) {
        std::string content;
        for (const EpochRecord& rec : history) {
            content += std::to_string(rec.epoch) + " " + fmt_g17(get(rec)) + "\n";
        }
        write_text_file(dir / (prefix + name + ".dat"), content);
    }
}

std::string run_tag(const std::string& arm, std::size_t draw) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03zu", draw);
    return arm + "_" + buf;
}

std::string accuracy_table(const std::vector<ArmSummary>& summaries) {
    std::string out = "Test accuracy over draws\n  ";
    char cell[64];
    std::snprintf(cell, sizeof(cell), "%-8s", "");
    out += cell;
    for (const ArmSummary& s : summaries) {
        std::snprintf(cell, sizeof(cell), "%-12s", s.arm.c_str());
        out += cell;
    }
    out += "\n";
    const std::pair<const char*, double ArmSummary::*> rows[] = {
        {"mu", &ArmSummary::mean}, {"sigma", &ArmSummary::stddev}, {"min", &ArmSummary::min}};
    for (const auto& [label, field] : rows) {
        std::snprintf(cell, sizeof(cell), "  %-8s", label);
        out += cell;
        for (const ArmSummary& s : summaries) {
            std::snprintf(cell, sizeof(cell), "%-12.4f", s.*field);
            out += cell;
        }
        out += "\n";
    }
    return out;
}

struct ComponentRow {
    std::string arm;
    double sum_tr = 0.0, sum_te = 0.0, cov_gap = 0.0;
    double ds2_tr = 0.0, ds2_te = 0.0, ds2_gap = 0.0;
    double acc = 0.0;
};

std::string components_table(const std::vector<ComponentRow>& rows) {
    std::string out = "CPR components (class-averaged, exact oracle)\n";
    out +=
        "  arm          sumS_tr    sumS_te    cov_gap    DS2_tr    DS2_te    DS2_gap   acc\n";
    for (const ComponentRow& r : rows) {
        char line[192];
        std::snprintf(line, sizeof(line),
                      "  %-12s %.6f   %.6f   %.6f   %.4f    %.4f    %.4f    %.4f\n",
                      r.arm.c_str(), r.sum_tr, r.sum_te, r.cov_gap, r.ds2_tr, r.ds2_te,
                      r.ds2_gap, r.acc);
        out += line;
    }
    return out;
}

std::vector<ComponentRow> component_rows_from_runs(const SuiteResult& suite,
                                                   const std::vector<Arm>& arms,
                                                   std::size_t draws) {
    std::vector<ComponentRow> rows;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        ComponentRow row;
        row.arm = arm_name(arms[a]);
        for (std::size_t d = 0; d < draws; ++d) {
            const RunResult& run = suite.runs[a * draws + d];
            row.sum_tr += run.report.train.mean_sum_s;
            row.sum_te += run.report.test.mean_sum_s;
            row.ds2_tr += run.report.train.mean_ds2;
            row.ds2_te += run.report.test.mean_ds2;
            row.acc += run.test_accuracy;
        }
        const double inv = 1.0 / static_cast<double>(draws);
        row.sum_tr *= inv;
        row.sum_te *= inv;
        row.ds2_tr *= inv;
        row.ds2_te *= inv;
        row.acc *= inv;
        row.cov_gap = row.sum_te - row.sum_tr;
        row.ds2_gap = row.ds2_tr - row.ds2_te;
        rows.push_back(row);
    }
    return rows;
}

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

void write_run_meta(const fs::path& dir, const std::string& command) {
    json meta;
    meta["tool"] = "cprlab";
    meta["version"] = kToolVersion;
    meta["command"] = command;
    meta["timestamp_utc"] = timestamp_utc();
    write_text_file(dir / "run_meta.json", meta.dump(2) + "\n");
}

/// Marks the output directory with an .incomplete file for the duration of
/// the run; an aborted run leaves the marker behind and the next run warns.
class OutputDir {
  public:
    explicit OutputDir(const std::string& dir) : path_(dir) {
        fs::create_directories(path_);
        marker_ = path_ / ".incomplete";
        if (fs::exists(marker_)) {
            std::cerr << "warning: " << path_.string()
                      << " holds partial results from an aborted run\n";
        }
        write_text_file(marker_, "running\n");
    }
    const fs::path& path() const { return path_; }
    void finish() { fs::remove(marker_); }

  private:
    fs::path path_;
    fs::path marker_;
};

int env_threads() {
    const char* raw = std::getenv("CPRLAB_THREADS");
    if (raw == nullptr || *raw == '\0') return 1;
    try {
        const int value = std::stoi(raw);
        if (value < 1) throw std::invalid_argument("below 1");
        return value;
    } catch (const std::exception&) {
        throw ConfigError("CPRLAB_THREADS must be a positive integer");
    }
}

struct Overrides {
    std::optional<double> beta, gamma, zeta, lr0, momentum, weight_decay, fraction;
    std::optional<double> spread, overlap, label_noise;
    std::optional<int> nu, r_max;
    std::optional<std::string> pad_mode, arm, activation, proto_loss, out_dir;
    std::optional<std::uint64_t> seed, data_seed;
    std::optional<std::size_t> epochs, warmup, batch_size, draws, report_every;
    std::vector<std::string> arms;
    bool dump_features = false;
};

void attach_common_options(CLI::App* cmd, std::string& config_path, Overrides& ov) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--beta", ov.beta, "prototype loss weight");
    cmd->add_option("--gamma", ov.gamma, "covariance loss weight");
    cmd->add_option("--zeta", ov.zeta, "prototype similarity loss weight");
    cmd->add_option("--nu", ov.nu, "covariance sign selector (-1, 0, 1)");
    cmd->add_option("--r-max", ov.r_max, "pad radius bound");
    cmd->add_option("--pad-mode", ov.pad_mode, "fixed | uniform");
    cmd->add_option("--proto-loss", ov.proto_loss, "normalized | unnormalized");
    cmd->add_option("--epochs", ov.epochs, "training epochs");
    cmd->add_option("--warmup", ov.warmup, "warmup epochs (cross-entropy only)");
    cmd->add_option("--lr0", ov.lr0, "base learning rate");
    cmd->add_option("--momentum", ov.momentum, "SGD momentum");
    cmd->add_option("--weight-decay", ov.weight_decay, "L2 weight decay");
    cmd->add_option("--batch-size", ov.batch_size, "minibatch size");
    cmd->add_option("--arm", ov.arm, "regularizer arm for single runs");
    cmd->add_option("--activation", ov.activation, "relu | tanh | identity");
    cmd->add_option("--seed", ov.seed, "training seed");
    cmd->add_option("--report-every", ov.report_every, "CPR snapshot cadence in epochs");
    cmd->add_option("--draws", ov.draws, "number of stratified subset draws");
    cmd->add_option("--fraction", ov.fraction, "subset fraction in (0, 1]");
    cmd->add_option("--arms", ov.arms, "suite arms (repeatable)");
    cmd->add_option("--spread", ov.spread, "synthetic blob spread");
    cmd->add_option("--overlap", ov.overlap, "synthetic blob overlap");
    cmd->add_option("--label-noise", ov.label_noise, "train label flip fraction");
    cmd->add_option("--data-seed", ov.data_seed, "synthetic data seed");
    cmd->add_option("--out", ov.out_dir, "output directory");
    cmd->add_flag("--dump-features", ov.dump_features,
                  "write penultimate feature CSVs next to the run outputs");
}

CliConfig build_config(const std::string& config_path, const Overrides& ov) {
    CliConfig cfg;
    if (!config_path.empty()) {
        cfg = parse_config_file(config_path);
    }
    if (ov.beta) cfg.train.beta = *ov.beta;
    if (ov.gamma) cfg.train.gamma = *ov.gamma;
    if (ov.zeta) cfg.train.zeta = *ov.zeta;
    if (ov.nu) cfg.train.cov.nu = *ov.nu;
    if (ov.r_max) cfg.train.cov.r_max = *ov.r_max;
    if (ov.pad_mode) {
        if (*ov.pad_mode == "fixed") {
            cfg.train.cov.pad_mode = PadMode::Fixed;
        } else if (*ov.pad_mode == "uniform") {
            cfg.train.cov.pad_mode = PadMode::Uniform;
        } else {
            throw UsageError("--pad-mode must be 'fixed' or 'uniform'");
        }
    }
    if (ov.proto_loss) {
        if (*ov.proto_loss == "normalized") {
            cfg.train.proto_form = ProtoLossForm::Normalized;
        } else if (*ov.proto_loss == "unnormalized") {
            cfg.train.proto_form = ProtoLossForm::Unnormalized;
        } else {
            throw UsageError("--proto-loss must be 'normalized' or 'unnormalized'");
        }
    }
    if (ov.epochs) cfg.train.epochs = *ov.epochs;
    if (ov.warmup) cfg.train.warmup = *ov.warmup;
    if (ov.lr0) cfg.train.lr0 = *ov.lr0;
    if (ov.momentum) cfg.train.momentum = *ov.momentum;
    if (ov.weight_decay) cfg.train.weight_decay = *ov.weight_decay;
    if (ov.batch_size) cfg.train.batch_size = *ov.batch_size;
    if (ov.arm) cfg.train.arm = arm_from_name(*ov.arm);
    if (ov.activation) cfg.train.activation = activation_from_name(*ov.activation);
    if (ov.seed) cfg.train.seed = *ov.seed;
    if (ov.report_every) cfg.train.report_every = *ov.report_every;
    if (ov.draws) cfg.draws = *ov.draws;
    if (ov.fraction) cfg.fraction = *ov.fraction;
    if (!ov.arms.empty()) {
        cfg.arms.clear();
        for (const std::string& name : ov.arms) {
            cfg.arms.push_back(arm_from_name(name));
        }
    }
    if (ov.spread) cfg.data.spread = *ov.spread;
    if (ov.overlap) cfg.data.overlap = *ov.overlap;
    if (ov.label_noise) cfg.data.label_noise = *ov.label_noise;
    if (ov.data_seed) cfg.data.seed = *ov.data_seed;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    if (ov.dump_features) cfg.dump_features = true;
    cfg.validate();
    return cfg;
}

void dump_feature_csvs(const fs::path& dir, const ModelParams& params,
                       const Standardizer& standardizer, const Dataset& train,
                       const Dataset& test) {
    const auto write_split = [&](const Dataset& split, const std::string& name) {
        const Matrix feats = extract_features(params, standardizer.apply(split.inputs));
        Dataset dump;
        dump.inputs = feats;
        dump.labels = split.labels;
        dump.num_classes = split.num_classes;
        dump.label_names = split.label_names;
        save_csv_dataset(dump, (dir / name).string());
    };
    write_split(train, "train_features.csv");
    write_split(test, "test_features.csv");
}

int cmd_train(const std::string& config_path, const Overrides& ov) {
    const CliConfig cfg = build_config(config_path, ov);
    const bool plots = cfg.write_plots.value_or(true);
    auto [train, test] = make_datasets(cfg.data);

    OutputDir out(cfg.out_dir);
    write_text_file(out.path() / "config_echo.json",
                    config_echo_json(cfg, plots).dump(2) + "\n");

    const TrainResult run = train_run(cfg.train, train, test);

    save_model_json(run.params, (out.path() / "model.json").string());
    save_prototypes_json(run.prototypes, (out.path() / "prototypes.json").string(),
                         train.label_names);
    if (cfg.write_history) {
        write_text_file(out.path() / "history.csv", history_csv(run.history));
    }
    if (!run.periodic.empty()) {
        write_text_file(out.path() / "periodic.csv", periodic_csv(run.periodic));
    }
    json report = cpr_report_json(run.report);
    report["bounds"] = bounds_json(run.report);
    write_text_file(out.path() / "cpr_report.json", report.dump(2) + "\n");
    if (cfg.dump_features) {
        dump_feature_csvs(out.path(), run.params, run.standardizer, train, test);
    }
    if (plots) {
        write_plot_files(out.path() / "plots", "", run.history);
    }
    write_run_meta(out.path(), "train");
    out.finish();

    std::cout << "arm " << arm_name(cfg.train.arm) << ": train_acc "
              << fmt_fixed(run.train_accuracy, 4) << ", test_acc "
              << fmt_fixed(run.test_accuracy, 4) << "\n"
              << "train mean 1'S1 " << fmt_g17(run.report.train.mean_sum_s)
              << ", train mean DS^2 " << fmt_g17(run.report.train.mean_ds2) << "\n"
              << "outputs in " << out.path().string() << "\n";
    return 0;
}

int cmd_suite(const std::string& config_path, const Overrides& ov) {
    const CliConfig cfg = build_config(config_path, ov);
    const bool plots = cfg.write_plots.value_or(false);
    auto [source, test] = make_datasets(cfg.data);

    SuiteConfig scfg;
    scfg.base = cfg.train;
    scfg.arms = cfg.arms;
    scfg.draws = cfg.draws;
    scfg.fraction = cfg.fraction;
    scfg.threads = env_threads();

    OutputDir out(cfg.out_dir);
    write_text_file(out.path() / "config_echo.json",
                    config_echo_json(cfg, plots).dump(2) + "\n");

    const SuiteResult suite = experiment_suite(scfg, source, test);

    json results;
    results["config"] = config_echo_json(cfg, plots);
    json plan;
    plan["draws"] = cfg.draws;
    plan["fraction"] = cfg.fraction;
    plan["seed"] = suite.plan.seed;
    plan["subsets"] = suite.plan.subsets;
    results["plan"] = std::move(plan);
    json summary = json::array();
    for (const ArmSummary& s : suite.summaries) {
        json js;
        js["arm"] = s.arm;
        js["mu"] = s.mean;
        js["sigma"] = s.stddev;
        js["min"] = s.min;
        summary.push_back(std::move(js));
    }
    results["summary"] = std::move(summary);

    json runs = json::array();
    for (const RunResult& run : suite.runs) {
        const std::string tag = run_tag(run.arm, run.draw);
        std::string history_path;
        if (cfg.write_history) {
            history_path = "history_" + tag + ".csv";
            write_text_file(out.path() / history_path, history_csv(run.history));
        }
        if (!run.periodic.empty()) {
            write_text_file(out.path() / ("periodic_" + tag + ".csv"),
                            periodic_csv(run.periodic));
        }
        if (plots) {
            write_plot_files(out.path() / "plots", tag + "_", run.history);
        }
        json jr;
        jr["arm"] = run.arm;
        jr["draw"] = run.draw;
        jr["seed"] = run.seed;
        jr["accuracy"] = run.test_accuracy;
        jr["train_accuracy"] = run.train_accuracy;
        jr["cpr_components"] = cpr_report_json(run.report);
        jr["bounds"] = bounds_json(run.report);
        jr["history_path"] = history_path;
        runs.push_back(std::move(jr));
    }
    results["runs"] = std::move(runs);
    write_text_file(out.path() / "results.json", results.dump(2) + "\n");
    write_run_meta(out.path(), "suite");
    out.finish();

    std::cout << accuracy_table(suite.summaries) << "\n"
              << components_table(component_rows_from_runs(suite, cfg.arms, cfg.draws))
              << "outputs in " << out.path().string() << "\n";
    return 0;
}

int cmd_bounds(const std::string& proto_path, const std::string& features_path,
               const std::string& out_dir) {
    std::vector<std::string> names;
    const PrototypeSet proto = load_prototypes_json(proto_path, &names);
    if (names.empty()) {
        // snapshots without label names pair rows by integer class id
        for (std::size_t k = 0; k < proto.num_classes(); ++k) {
            names.push_back(std::to_string(k));
        }
    }
    const Dataset feats = load_csv_dataset(features_path, names);
    if (feats.input_dim() != proto.dim()) {
        throw DimensionMismatchError("bounds: feature width " +
                                     std::to_string(feats.input_dim()) +
                                     " vs prototype dim " + std::to_string(proto.dim()));
    }

    json rows = json::array();
    for (std::size_t k = 0; k < proto.num_classes(); ++k) {
        // rows without a direction cannot enter the angular statistics
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < feats.size(); ++i) {
            if (static_cast<std::size_t>(feats.labels[i]) != k) continue;
            if (norm(feats.inputs.row(i)) > kEpsNorm) idx.push_back(i);
        }
        if (idx.empty()) {
            throw EmptyInputError("bounds: no usable feature rows for class " +
                                  std::to_string(k));
        }
        Matrix class_feats(idx.size(), feats.input_dim());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t c = 0; c < feats.input_dim(); ++c) {
                class_feats(i, c) = feats.inputs(idx[i], c);
            }
        }
        const CovMatrix s = cov_matrix_oracle(class_feats, proto.prototype(k));
        const double ds = dissimilarity(proto, k);
        const BoundReport rep = make_bound_report(ones_quadratic_form(s), ds);
        json jr;
        jr["class"] = k;
        jr["count"] = idx.size();
        jr["sum_s"] = rep.sum_s;
        jr["ds"] = rep.ds;
        jr["ds2"] = rep.ds2;
        jr["two_sided"] = rep.two_sided;
        jr["one_sided"] = rep.one_sided;
        jr["cpr"] = rep.cpr;
        rows.push_back(std::move(jr));
    }
    const std::string text = rows.dump(2) + "\n";
    std::cout << text;
    if (!out_dir.empty()) {
        OutputDir out(out_dir);
        write_text_file(out.path() / "bounds.json", text);
        write_run_meta(out.path(), "bounds");
        out.finish();
    }
    return 0;
}

int cmd_report(const std::string& results_path, const std::string& out_dir) {
    std::ifstream in(results_path);
    if (!in) {
        throw IoError("cannot read " + results_path);
    }
    json results;
    try {
        in >> results;
    } catch (const json::exception& e) {
        throw ParseError(std::string("results file: ") + e.what());
    }

    std::vector<ArmSummary> summaries;
    for (const auto& js : results.at("summary")) {
        ArmSummary s;
        s.arm = js.at("arm").get<std::string>();
        s.mean = js.at("mu").get<double>();
        s.stddev = js.at("sigma").get<double>();
        s.min = js.at("min").get<double>();
        summaries.push_back(std::move(s));
    }

    std::vector<ComponentRow> rows;
    const auto num_or_nan = [](const json& v) {
        return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
    };
    for (const auto& js : results.at("runs")) {
        const std::string arm = js.at("arm").get<std::string>();
        auto it = std::find_if(rows.begin(), rows.end(),
                               [&](const ComponentRow& r) { return r.arm == arm; });
        if (it == rows.end()) {
            rows.push_back(ComponentRow{});
            rows.back().arm = arm;
            it = rows.end() - 1;
        }
        const auto& comp = js.at("cpr_components");
        it->sum_tr += num_or_nan(comp.at("train").at("mean_sum_s"));
        it->sum_te += num_or_nan(comp.at("test").at("mean_sum_s"));
        it->ds2_tr += num_or_nan(comp.at("train").at("mean_ds2"));
        it->ds2_te += num_or_nan(comp.at("test").at("mean_ds2"));
        it->acc += js.at("accuracy").get<double>();
        it->cov_gap += 1.0;  // reused as the per-arm run counter until divided below
    }
    for (ComponentRow& r : rows) {
        const double n = r.cov_gap;
        r.sum_tr /= n;
        r.sum_te /= n;
        r.ds2_tr /= n;
        r.ds2_te /= n;
        r.acc /= n;
        r.cov_gap = r.sum_te - r.sum_tr;
        r.ds2_gap = r.ds2_tr - r.ds2_te;
    }

    const std::string text = accuracy_table(summaries) + "\n" + components_table(rows);
    std::cout << text;
    if (!out_dir.empty()) {
        OutputDir out(out_dir);
        write_text_file(out.path() / "report.txt", text);
        json jrep;
        jrep["summary"] = results.at("summary");
        json jrows = json::array();
        for (const ComponentRow& r : rows) {
            json jr;
            jr["arm"] = r.arm;
            jr["sum_s_train"] = r.sum_tr;
            jr["sum_s_test"] = r.sum_te;
            jr["cov_gap"] = r.cov_gap;
            jr["ds2_train"] = r.ds2_tr;
            jr["ds2_test"] = r.ds2_te;
            jr["ds2_gap"] = r.ds2_gap;
            jr["accuracy"] = r.acc;
            jrows.push_back(std::move(jr));
        }
        jrep["cpr_components"] = std::move(jrows);
        write_text_file(out.path() / "report.json", jrep.dump(2) + "\n");
        write_run_meta(out.path(), "report");
        out.finish();
    }
    return 0;
}

int cmd_bench_cov(std::vector<std::size_t> sizes, std::size_t reps, std::size_t samples,
                  int pad_radius, const std::string& out_dir) {
    if (sizes.empty() || reps == 0 || samples == 0) {
        throw UsageError("bench-cov: sizes, reps and samples must be positive");
    }
    std::sort(sizes.begin(), sizes.end());
    SeededRng rng(42);
    CovLossConfig cfg;
    cfg.nu = 0;
    cfg.r_max = pad_radius;
    cfg.pad_mode = PadMode::Fixed;

    std::string csv = "J,approx_seconds,oracle_seconds\n";
    std::cout << "J approx_seconds oracle_seconds\n";
    for (const std::size_t J : sizes) {
        Vector v(J), p(J);
        for (double& x : v) x = rng.next_normal();
        for (double& x : p) x = rng.next_normal() + 2.0;  // keep the norm comfortably positive
        Matrix feats(samples, J);
        for (double& x : feats.data()) x = rng.next_normal();

        const std::size_t iters = std::max<std::size_t>(1, 262144 / J);
        std::vector<double> approx_times, oracle_times;
        double sink = 0.0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            for (std::size_t it = 0; it < iters; ++it) {
                sink += cov_loss_pair(v, p, cfg, pad_radius).loss;
            }
            const auto t1 = std::chrono::steady_clock::now();
            approx_times.push_back(std::chrono::duration<double>(t1 - t0).count() /
                                   static_cast<double>(iters));

            const auto t2 = std::chrono::steady_clock::now();
            const CovMatrix s = cov_matrix_oracle(feats, p);
            const auto t3 = std::chrono::steady_clock::now();
            sink += s(0, 0);
            oracle_times.push_back(std::chrono::duration<double>(t3 - t2).count());
        }
        std::sort(approx_times.begin(), approx_times.end());
        std::sort(oracle_times.begin(), oracle_times.end());
        const double approx = approx_times[approx_times.size() / 2];
        const double oracle = oracle_times[oracle_times.size() / 2];
        char line[128];
        std::snprintf(line, sizeof(line), "%zu %.9f %.9f\n", J, approx, oracle);
        std::cout << line;
        csv += std::to_string(J) + "," + fmt_g17(approx) + "," + fmt_g17(oracle) + "\n";
        if (!std::isfinite(sink)) {
            throw NonFiniteLossError("bench-cov: non-finite loss value");
        }
    }
    if (!out_dir.empty()) {
        OutputDir out(out_dir);
        write_text_file(out.path() / "bench.csv", csv);
        write_run_meta(out.path(), "bench-cov");
        out.finish();
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"cprlab: prototype-risk regularization laboratory"};
    app.require_subcommand(1);

    std::string train_config, suite_config;
    Overrides train_ov, suite_ov;
    CLI::App* train_cmd = app.add_subcommand("train", "run a single training job");
    attach_common_options(train_cmd, train_config, train_ov);
    CLI::App* suite_cmd =
        app.add_subcommand("suite", "run the stratified-subset experiment suite");
    attach_common_options(suite_cmd, suite_config, suite_ov);

    CLI::App* bounds_cmd =
        app.add_subcommand("bounds", "bound report from a prototype snapshot and feature dump");
    std::string proto_path, features_path, bounds_out;
    bounds_cmd->add_option("--prototypes", proto_path, "prototype snapshot JSON")->required();
    bounds_cmd->add_option("--features", features_path, "feature dump CSV")->required();
    bounds_cmd->add_option("--out", bounds_out, "optional output directory");

    CLI::App* report_cmd = app.add_subcommand("report", "render tables from suite results");
    std::string results_path, report_out;
    report_cmd->add_option("--results", results_path, "results.json from a suite run")
        ->required();
    report_cmd->add_option("--out", report_out, "optional output directory");

    CLI::App* bench_cmd = app.add_subcommand("bench-cov", "time the covariance loss vs oracle");
    std::vector<std::size_t> bench_sizes = {1024, 2048, 4096, 8192};
    std::size_t bench_reps = 5, bench_samples = 4;
    int bench_radius = 10;
    std::string bench_out;
    bench_cmd->add_option("--sizes", bench_sizes, "feature dimensions to time");
    bench_cmd->add_option("--reps", bench_reps, "timing repetitions per size");
    bench_cmd->add_option("--samples", bench_samples, "oracle sample count");
    bench_cmd->add_option("--pad-radius", bench_radius, "fixed pad radius");
    bench_cmd->add_option("--out", bench_out, "optional output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_config, train_ov);
        if (suite_cmd->parsed()) return cmd_suite(suite_config, suite_ov);
        if (bounds_cmd->parsed()) return cmd_bounds(proto_path, features_path, bounds_out);
        if (report_cmd->parsed()) return cmd_report(results_path, report_out);
        if (bench_cmd->parsed())
            return cmd_bench_cov(bench_sizes, bench_reps, bench_samples, bench_radius,
                                 bench_out);
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("cprlab");
    for (const std::string& a : args) {
        argv.push_back(a.c_str());
    }
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cpr
