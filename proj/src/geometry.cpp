#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"

namespace detfuse {

BoundingBox::BoundingBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
    if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
        !std::isfinite(y_max)) {
        throw DataError("bounding box has non-finite coordinates");
    }
    if (!(x_min < x_max) || !(y_min < y_max)) {
        std::ostringstream os;
        os << "degenerate bounding box (" << x_min << ", " << y_min << ", " << x_max << ", "
           << y_max << ")";
        throw DataError(os.str());
    }
}

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
    const double w = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
    const double h = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (a == b) return 1.0;
    const double inter = intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double coverage(const BoundingBox& candidate, const BoundingBox& dominator) {
    const double inter = intersection_area(candidate, dominator);
    if (inter <= 0.0) return 0.0;
    return std::clamp(inter / candidate.area(), 0.0, 1.0);
}

Correspondence correspondences(std::span<const Detection> dets, std::size_t self,
                               int n_detectors) {
    Correspondence out;
    out.slots.resize(static_cast<std::size_t>(n_detectors));
    const Detection& me = dets[self];

    for (std::size_t k = 0; k < dets.size(); ++k) {
        const Detection& other = dets[k];
        if (other.detector_id < 0 || other.detector_id >= n_detectors) {
            throw DataError("detector id out of roster range");
        }
        if (other.detector_id == me.detector_id) continue;
        const double overlap = iou(me.box, other.box);
        if (overlap <= 0.0) continue;

        auto& slot = out.slots[static_cast<std::size_t>(other.detector_id)];
        bool take = !slot.partner || overlap > slot.gamma;
        if (!take && overlap == slot.gamma) {
            // k increases monotonically, so equal raw score keeps the lower index.
            take = other.raw_score > dets[*slot.partner].raw_score;
        }
        if (take) {
            slot.gamma = overlap;
            slot.partner = k;
        }
    }

    auto& own = out.slots[static_cast<std::size_t>(me.detector_id)];
    own.gamma = 1.0;
    own.partner = self;
    return out;
}

}  // namespace detfuse
