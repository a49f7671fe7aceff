#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "corpus_io.hpp"
#include "evaluation.hpp"
#include "features.hpp"
#include "fusion.hpp"
#include "kvfile.hpp"
#include "rankers.hpp"

namespace detfuse {

// Key = value run configuration plus command-line overrides. Every key the workflow reads
// is listed in config_keys(); unknown keys are rejected so typos cannot pass silently.
class RunConfig {
public:
    RunConfig() = default;
    explicit RunConfig(KeyValueFile values);

    static RunConfig load(const std::filesystem::path& path);
    // "key=value"
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    const KeyValueFile& values() const { return values_; }
    std::filesystem::path out_dir() const;
    Roster detectors() const;
    Roster classes() const;
    std::uint64_t seed() const;  // UsageError when missing
    FeatureOptions feature_options() const;
    NmsOptions nms_options() const;
    ApProtocol protocol() const;
    std::filesystem::path split_path() const;

    // FNV-1a of the sorted key = value text, excluding the output directory.
    std::string hash() const;

private:
    KeyValueFile values_;
};

struct ConfigKey {
    const char* pattern;  // '*' stands for a detector name or a proposal source
    const char* help;
};
const std::vector<ConfigKey>& config_keys();

struct RunResult {
    std::string summary;                              // human-readable lines for stdout
    std::vector<std::filesystem::path> artifacts;     // relative to the output directory
};

inline constexpr const char* kSubcommands[] = {"simulate", "calibrate", "featurize", "train",
                                               "rerank",   "eval",      "analyze",   "bound"};

// Throws UsageError, DataError or NumericError.
RunResult run_subcommand(const std::string& name, const RunConfig& config);

// In-process helpers shared with tests.
struct FoldData {
    DetectionCorpus corpus;
    GroundTruthSet gt;
    ProposalSet proposals;
};

// Loads one fold of the split named in the config; applies calibration.tsv when
// `calibrated` is set.
FoldData load_fold(const RunConfig& config, const std::string& fold, bool calibrated);

// Overlap label per detection: max IoU with a same-class object of the same image.
std::vector<double> overlap_labels(const DetectionCorpus& corpus, const GroundTruthIndex& gt);

std::string csv_field(const std::string& s);

}  // namespace detfuse
