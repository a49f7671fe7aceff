#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corpus_io.hpp"
#include "features.hpp"
#include "geometry.hpp"
#include "rankers.hpp"

namespace detfuse {

inline constexpr double kNmsCoverage = 0.4;

struct NmsOptions {
    bool enabled = true;
    double coverage_threshold = kNmsCoverage;
    // Classic NMS: any later box in the (image, class) group may be suppressed, not only
    // correspondence partners.
    bool all_pairs = false;
};

// Combined output: every detection with its final score. Kept in rank order per class
// (class id, score desc, image id, then a content tie-break) after sort_ranked().
using RankedDetectionList = std::vector<ScoredDetection>;

void sort_ranked(RankedDetectionList& list);

// Suppression flags for one image and class. Walks detections by descending score; each kept
// detection suppresses the not yet suppressed, lower-ranked detections linked to it in the
// symmetrized correspondence graph whose coverage by the kept box reaches the threshold.
std::vector<char> cross_nms(std::span<const Detection> dets, std::span<const double> scores,
                            int n_detectors, const NmsOptions& options = {});

// Runs cross_nms over every (image, class) group and sets the suppressed flags.
void apply_nms(RankedDetectionList& list, int n_detectors, const NmsOptions& options = {});

enum class NaiveMode { I, II, III };
std::string_view naive_mode_name(NaiveMode mode);

// I: union by calibrated score. II: per class, round-robin over the per-detector lists in
// `detector_order` (exhausted lists are skipped). III: whole lists one detector after another.
// II and III score position p of T as 1 - p/T. An empty order means roster order.
RankedDetectionList naive_merge(const DetectionCorpus& corpus, NaiveMode mode,
                                std::span<const int> detector_order = {},
                                const NmsOptions& nms = {});

// Scores every detection with the model for its class (or a pooled model, class_id -1).
RankedDetectionList rerank(const DetectionCorpus& corpus, std::span<const RankerModel> models,
                           const FeatureTable& features, const NmsOptions& nms = {});

// Baseline list of one detector ordered by its calibrated score.
RankedDetectionList detector_baseline(const DetectionCorpus& corpus, int detector_id,
                                      bool use_calibrated = true);

// Re-ranks a corpus already restricted to a single detector.
RankedDetectionList single_detector_rerank(const DetectionCorpus& single, std::span<const RankerModel> models,
                                           const FeatureTable& features, const NmsOptions& nms = {});

// Detection record, then the final score; with `with_suppressed` every entry is written with
// a trailing 0/1 flag, otherwise suppressed entries are dropped.
std::string format_ranked_list(const RankedDetectionList& list, const Roster& detectors,
                               const Roster& classes, bool with_suppressed);
RankedDetectionList parse_ranked_list(const std::string& text, const Roster& detectors,
                                      const Roster& classes, const std::string& origin = "<memory>");

}  // namespace detfuse
