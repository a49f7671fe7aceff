#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus_io.hpp"
#include "geometry.hpp"
#include "rankers.hpp"

namespace detfuse {

inline constexpr double kVocIouThreshold = 0.5;

enum class ApProtocol { Voc07ElevenPoint, AllPoints };
std::string_view protocol_name(ApProtocol p);
ApProtocol parse_protocol(std::string_view name);

enum class MatchOutcome { TruePositive, FalsePositive, Ignored };

enum class FpType { Loc = 0, Sim = 1, Oth = 2, Bg = 3 };
inline constexpr int kFpTypes = 4;
std::string_view fp_type_name(FpType t);

struct DetectionMatch {
    MatchOutcome outcome = MatchOutcome::FalsePositive;
    std::optional<std::size_t> gt;  // index into the ground-truth span given to match()
    double max_overlap = 0.0;       // largest IoU with any same-class ground truth
    bool duplicate = false;         // FP above threshold on an already matched object
    std::optional<FpType> fp_type;  // set by the taxonomy, FPs only
};

// Greedy VOC matching inside one image and class. `dets` must already be in rank order.
// Each detection claims the unmatched non-difficult object of highest IoU when that IoU
// exceeds the threshold; otherwise it is ignored if it exceeds the threshold on a difficult
// object, and is a false positive otherwise.
std::vector<DetectionMatch> match(std::span<const BoundingBox> dets,
                                  std::span<const GroundTruthObject> gts,
                                  double iou_threshold = kVocIouThreshold);

// Ground truth grouped by (image, class).
class GroundTruthIndex {
public:
    explicit GroundTruthIndex(const GroundTruthSet& gt);

    std::span<const GroundTruthObject> objects(const std::string& image_id, int class_id) const;
    // All objects in the image regardless of class.
    std::span<const GroundTruthObject> image(const std::string& image_id) const;
    std::size_t positives(int class_id) const;  // non-difficult count
    int n_classes() const { return n_classes_; }

private:
    int n_classes_ = 0;
    std::vector<GroundTruthObject> by_image_;
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> image_range_;
    std::vector<std::size_t> positives_;
};

struct PRCurve {
    ApProtocol protocol = ApProtocol::AllPoints;
    std::vector<double> recall;
    std::vector<double> precision;
    double ap = 0.0;
};

// `hits` lists non-ignored detections in rank order (true = TP). Returns nullopt when
// there are no positives.
std::optional<double> average_precision(std::span<const char> hits, std::size_t n_positives,
                                        ApProtocol protocol);
std::optional<PRCurve> pr_curve(std::span<const char> hits, std::size_t n_positives,
                                ApProtocol protocol);

struct ClassEvaluation {
    int class_id = 0;
    std::size_t n_positives = 0;
    std::vector<std::size_t> ranked;        // indices into the evaluated list
    std::vector<DetectionMatch> matches;    // aligned with `ranked`
    std::optional<double> ap_voc07;
    std::optional<double> ap_all_points;

    std::vector<char> hits() const;
};

struct EvaluationReport {
    std::vector<ClassEvaluation> classes;

    // Mean over classes with at least one positive; nullopt if none has.
    std::optional<double> mean_ap(ApProtocol protocol) const;
    std::optional<double> class_ap(int class_id, ApProtocol protocol) const;
};

// Ranks each class by final score (ties: image id, then list position), skips suppressed
// entries and matches against the ground truth.
EvaluationReport evaluate(std::span<const ScoredDetection> list, const GroundTruthIndex& gt,
                          double iou_threshold = kVocIouThreshold);

struct BoundReport {
    std::vector<std::optional<double>> ap_voc07;        // per class
    std::vector<std::optional<double>> ap_all_points;   // per class
    std::vector<std::size_t> matchable;                 // per class
    std::optional<double> mean_ap(ApProtocol protocol) const;
};

// Maximal AP: all detections of a maximum-cardinality detection/object matching at
// IoU > threshold ranked first. `greedy` swaps the exact matching for a greedy one.
BoundReport maximal_map(std::span<const ScoredDetection> list, const GroundTruthIndex& gt,
                        bool greedy = false, double iou_threshold = kVocIouThreshold);

// Maximum bipartite matching size between boxes and the non-difficult objects.
std::size_t max_matching(std::span<const BoundingBox> dets, std::span<const GroundTruthObject> gts,
                         double iou_threshold = kVocIouThreshold, bool greedy = false);

// Class -> similarity group. Classes not named in any group form their own group.
class SimilarityGroups {
public:
    // Animal, furniture, vehicle and person groups over the standard VOC class names,
    // restricted to the names present in the roster.
    static SimilarityGroups voc_default(const Roster& classes);
    // Spec lines "group=cls1,cls2;group2=cls3". Throws DataError for unknown classes.
    static SimilarityGroups parse(const Roster& classes, const std::string& spec);

    int group(int class_id) const { return group_of_[static_cast<std::size_t>(class_id)]; }
    const std::string& group_name(int group) const { return names_[static_cast<std::size_t>(group)]; }
    int n_groups() const { return static_cast<int>(names_.size()); }

private:
    std::vector<int> group_of_;
    std::vector<std::string> names_;
};

// Types one false positive of class `class_id`.
FpType classify_false_positive(const BoundingBox& box, int class_id, const DetectionMatch& match,
                               std::span<const GroundTruthObject> image_objects,
                               const SimilarityGroups& groups);

struct FpTaxonomyRow {
    std::string scope;          // class name, "group:<name>" or "all"
    std::size_t fp_count = 0;   // bucket: top-k false positives per class
    std::size_t counted = 0;    // false positives actually aggregated
    std::array<double, kFpTypes> fraction{};
};

// Types every FP in `report` (fills DetectionMatch::fp_type) and returns cumulative type
// fractions at increasing FP counts per class, per group and overall.
std::vector<FpTaxonomyRow> fp_taxonomy(std::span<const ScoredDetection> list,
                                       const GroundTruthIndex& gt, EvaluationReport& report,
                                       const Roster& classes, const SimilarityGroups& groups);

// Elementwise mean of |w| across per-class models. Throws DataError on empty input or
// mismatched dimensions.
std::vector<double> feature_importance(std::span<const RankerModel> models);

}  // namespace detfuse
