#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corpus_io.hpp"
#include "evaluation.hpp"

namespace detfuse {

// Sigmoid 1 / (1 + exp(alpha * x + beta)); alpha < 0 when higher raw scores are better.
struct PlattParams {
    double alpha = 0.0;
    double beta = 0.0;

    bool operator==(const PlattParams&) const = default;
};

struct LabeledScore {
    double score = 0.0;
    bool positive = false;
};

double apply_platt(const PlattParams& p, double x);

// Cross-entropy of the sigmoid against the prior-corrected targets
// t+ = (N+ + 1) / (N+ + 2), t- = 1 / (N- + 2).
double platt_objective(const PlattParams& p, std::span<const LabeledScore> data);
std::pair<double, double> platt_gradient(const PlattParams& p, std::span<const LabeledScore> data);

struct PlattFit {
    PlattParams params;
    int iterations = 0;
    double objective = 0.0;
};

// Damped Newton with backtracking line search; stops on relative objective change
// below 1e-8 or after 200 iterations. Input order does not affect the result.
// Throws DataError("degenerate calibration set") without both label kinds.
PlattFit fit_platt_detailed(std::span<const LabeledScore> data);
PlattParams fit_platt(std::span<const LabeledScore> data);

// Parameters per (detector, class); a detector-level pooled fit stands in for pairs whose
// own labels are single-class.
class CalibrationTable {
public:
    void set(int detector_id, int class_id, PlattParams p);
    std::optional<PlattParams> find(int detector_id, int class_id) const;
    const std::map<std::pair<int, int>, PlattParams>& entries() const { return entries_; }

    // Lines: detector_name, class_name, alpha, beta (tab-separated, round-trip precision).
    std::string format(const Roster& detectors, const Roster& classes) const;
    static CalibrationTable parse(const std::string& text, const Roster& detectors, const Roster& classes,
                                  const std::string& origin = "<memory>");

private:
    std::map<std::pair<int, int>, PlattParams> entries_;
};

// VOC-matched labels (IoU > 0.5, single match per object) for every detection in the
// corpus, computed per detector and class in the detector's own score order. Detections
// ignored by the difficult rule get nullopt.
std::vector<std::optional<bool>> detector_match_labels(const DetectionCorpus& corpus,
                                                       const GroundTruthIndex& gt);

// Fits a table over one or more labelled corpora sharing the same rosters. With
// `pooled`, one fit per detector is shared across classes.
CalibrationTable fit_calibration_table(std::span<const DetectionCorpus* const> corpora,
                                       std::span<const GroundTruthIndex* const> truths, bool pooled);

// Stores calibrated scores on every detection. Throws DataError when a detection's
// (detector, class) pair has no parameters.
void apply_calibration(DetectionCorpus& corpus, const CalibrationTable& table);

}  // namespace detfuse
