#pragma once

// Helpers shared by the unit tests and the acceptance runner. The oracles here are written
// from the definitions, independently of the library code they check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "geometry.hpp"
#include "random.hpp"

namespace testing_support {

using detfuse::BoundingBox;

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("detfuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline BoundingBox random_box(detfuse::Rng& rng, double canvas = 100.0) {
    const double x0 = rng.uniform(0.0, canvas * 0.8);
    const double y0 = rng.uniform(0.0, canvas * 0.8);
    const double w = rng.uniform(1.0, canvas * 0.5);
    const double h = rng.uniform(1.0, canvas * 0.5);
    return BoundingBox(x0, y0, x0 + w, y0 + h);
}

// Area-based overlap computed from the definition.
inline double ref_iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::max(0.0, std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min()));
    const double ih = std::max(0.0, std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min()));
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

// Precision/recall enumeration: after each of the ranked entries, tp/(k+1) and tp/npos.
struct RefCurve {
    std::vector<double> precision;
    std::vector<double> recall;
};

inline RefCurve ref_curve(const std::vector<int>& hits, std::size_t npos) {
    RefCurve c;
    int tp = 0;
    for (std::size_t k = 0; k < hits.size(); ++k) {
        tp += hits[k];
        c.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        c.recall.push_back(static_cast<double>(tp) / static_cast<double>(npos));
    }
    return c;
}

// Interpolated precision at recall r: best precision at any rank reaching recall >= r.
inline double interpolated_precision(const RefCurve& c, double r) {
    double best = 0.0;
    for (std::size_t k = 0; k < c.precision.size(); ++k) {
        if (c.recall[k] >= r) best = std::max(best, c.precision[k]);
    }
    return best;
}

inline double ref_ap_voc07(const std::vector<int>& hits, std::size_t npos) {
    const auto c = ref_curve(hits, npos);
    double sum = 0.0;
    for (int i = 0; i <= 10; ++i) sum += interpolated_precision(c, i / 10.0);
    return sum / 11.0;
}

// Sum over each rank where recall increases of the recall step times the interpolated
// precision at the new recall level.
inline double ref_ap_all_points(const std::vector<int>& hits, std::size_t npos) {
    const auto c = ref_curve(hits, npos);
    double ap = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < hits.size(); ++k) {
        if (c.recall[k] > prev) {
            ap += (c.recall[k] - prev) * interpolated_precision(c, c.recall[k]);
            prev = c.recall[k];
        }
    }
    return ap;
}

struct RefDet {
    int image = 0;
    int cls = 0;
    BoundingBox box;
    double score = 0.0;
};

struct RefGt {
    int image = 0;
    int cls = 0;
    BoundingBox box;
    bool difficult = false;
};

// Brute-force VOC evaluation of one class: rank by score (ties by image, then list order),
// match each detection to the free non-difficult object of largest IoU above 0.5, ignore
// detections claiming a difficult object, count the rest as false positives.
inline std::vector<int> ref_hits(const std::vector<RefDet>& dets, const std::vector<RefGt>& gts, int cls) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].cls == cls) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return dets[a].image < dets[b].image;
    });
    std::vector<char> used(gts.size(), 0);
    std::vector<int> hits;
    for (const auto i : order) {
        const auto& d = dets[i];
        double best = 0.5;
        std::optional<std::size_t> pick;
        bool on_difficult = false;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gts[g].image != d.image || gts[g].cls != cls) continue;
            const double o = ref_iou(d.box, gts[g].box);
            if (gts[g].difficult) {
                if (o > 0.5) on_difficult = true;
                continue;
            }
            if (!used[g] && o > best) {
                best = o;
                pick = g;
            }
        }
        if (pick) {
            used[*pick] = 1;
            hits.push_back(1);
        } else if (!on_difficult) {
            hits.push_back(0);
        }
    }
    return hits;
}

inline std::size_t ref_positives(const std::vector<RefGt>& gts, int cls) {
    std::size_t n = 0;
    for (const auto& g : gts) n += (g.cls == cls && !g.difficult) ? 1 : 0;
    return n;
}

}  // namespace testing_support
