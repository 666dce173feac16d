#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpr/data.hpp"
#include "cpr/trainer.hpp"

namespace cpr {

inline constexpr const char* kToolVersion = "0.1.0";

struct DataConfig {
    std::string source = "synthetic";  // synthetic | csv
    std::string csv_path;
    std::string test_csv_path;
    std::size_t classes = 10;
    std::size_t dim = 32;
    std::size_t n_per_class = 200;
    std::size_t test_per_class = 100;
    double spread = 0.4;  // tuned once: nearest-mean probe lands near 78%
    double overlap = 0.0;
    double label_noise = 0.1;  // applied to the train source only
    std::uint64_t seed = 12345;
};

/// Effective configuration: JSON file values override defaults, CLI flags
/// override the file. Unknown JSON keys are rejected.
struct CliConfig {
    DataConfig data;
    TrainConfig train;
    std::vector<Arm> arms = {Arm::None, Arm::Excpr};
    std::size_t draws = 12;
    double fraction = 0.5;
    std::string out_dir = "out";
    bool write_history = true;
    std::optional<bool> write_plots;  // train defaults true, suite false
    bool dump_features = false;

    void validate() const;
};

CliConfig parse_config_file(const std::string& path);
CliConfig parse_config_text(const std::string& text, const std::string& origin);

/// (train source, test split) per the data section.
std::pair<Dataset, Dataset> make_datasets(const DataConfig& cfg);

/// Entry point behind main(): 0 success, 1 usage/config error, 2 runtime
/// failure. Diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace cpr
