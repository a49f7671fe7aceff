#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace detfuse {

// Axis-aligned box in pixel coordinates with strictly positive area.
class BoundingBox {
public:
    // Throws DataError unless all coordinates are finite and min < max on both axes.
    BoundingBox(double x_min, double y_min, double x_max, double y_max);

    double x_min() const { return x_min_; }
    double y_min() const { return y_min_; }
    double x_max() const { return x_max_; }
    double y_max() const { return y_max_; }
    double width() const { return x_max_ - x_min_; }
    double height() const { return y_max_ - y_min_; }
    double area() const { return width() * height(); }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

private:
    double x_min_;
    double y_min_;
    double x_max_;
    double y_max_;
};

struct Detection {
    std::string image_id;
    int class_id = 0;
    int detector_id = 0;
    BoundingBox box;
    double raw_score = 0.0;
    std::optional<double> calibrated_score;

    // Score used by cross-detector features: calibrated when requested and present.
    double score(bool prefer_calibrated) const {
        return prefer_calibrated && calibrated_score ? *calibrated_score : raw_score;
    }
};

// A detection carrying the score a fusion stage assigned to it.
struct ScoredDetection {
    Detection detection;
    double final_score = 0.0;
    bool suppressed = false;
};

struct GroundTruthObject {
    std::string image_id;
    int class_id = 0;
    BoundingBox box;
    bool difficult = false;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);

// Intersection over union, in [0, 1].
double iou(const BoundingBox& a, const BoundingBox& b);

// Fraction of `candidate` covered by `dominator`: Area(candidate ∩ dominator) / Area(candidate).
double coverage(const BoundingBox& candidate, const BoundingBox& dominator);

struct CorrespondenceSlot {
    double gamma = 0.0;
    std::optional<std::size_t> partner;  // index into the detection span
};

// One slot per detector. gamma == 0 exactly when partner is empty.
struct Correspondence {
    std::vector<CorrespondenceSlot> slots;
};

// Maximum-overlap partner of dets[self] within each detector. `dets` must hold detections
// of one image and one class. The own-detector slot is always the detection itself
// (gamma 1). Ties on IoU prefer the higher raw score, then the lower index.
Correspondence correspondences(std::span<const Detection> dets, std::size_t self, int n_detectors);

}  // namespace detfuse
