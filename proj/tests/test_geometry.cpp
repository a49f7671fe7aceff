#include <doctest.h>

#include <optional>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"
#include "test_support.hpp"

using namespace detfuse;
using testing_support::random_box;
using testing_support::ref_iou;

TEST_CASE("iou and coverage on hand-computed boxes") {
    const BoundingBox a(0, 0, 2, 2);
    const BoundingBox b(1, 1, 3, 3);
    CHECK(intersection_area(a, b) == doctest::Approx(1.0));
    CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0));
    CHECK(coverage(a, b) == doctest::Approx(0.25));
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, BoundingBox(5, 5, 6, 6)) == 0.0);
    // Box inside another: fully covered, IoU is the area ratio.
    const BoundingBox inner(0.5, 0.5, 1.5, 1.5);
    CHECK(coverage(inner, a) == doctest::Approx(1.0));
    CHECK(iou(inner, a) == doctest::Approx(0.25));
}

TEST_CASE("degenerate or non-finite boxes are rejected") {
    CHECK_THROWS_AS(BoundingBox(0, 0, 0, 1), DataError);
    CHECK_THROWS_AS(BoundingBox(2, 0, 1, 1), DataError);
    CHECK_THROWS_AS(BoundingBox(0, 0, 1, std::nan("")), DataError);
    CHECK_THROWS_AS(BoundingBox(0, 0, INFINITY, 1), DataError);
}

TEST_CASE("iou properties on random boxes") {
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        const auto a = random_box(rng);
        const auto b = random_box(rng);
        const double ab = iou(a, b);
        CHECK(ab == iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(ab == doctest::Approx(ref_iou(a, b)).epsilon(1e-12));
        CHECK(coverage(a, b) >= ab - 1e-12);
        CHECK(coverage(a, b) <= 1.0);
    }
}

namespace {

Detection det(int detector, double x, double y, double w, double h, double score) {
    return Detection{"img", 0, detector, BoundingBox(x, y, x + w, y + h), score, std::nullopt};
}

// Brute force: for each other detector, the max-IoU detection with IoU > 0, ties by higher
// raw score then lower index.
std::vector<std::optional<std::size_t>> brute_partners(const std::vector<Detection>& dets, std::size_t self,
                                                       int n_det) {
    std::vector<std::optional<std::size_t>> out(static_cast<std::size_t>(n_det));
    for (int j = 0; j < n_det; ++j) {
        if (j == dets[self].detector_id) {
            out[static_cast<std::size_t>(j)] = self;
            continue;
        }
        std::optional<std::size_t> best;
        for (std::size_t k = 0; k < dets.size(); ++k) {
            if (dets[k].detector_id != j) continue;
            const double o = ref_iou(dets[self].box, dets[k].box);
            if (o <= 0.0) continue;
            if (!best) {
                best = k;
                continue;
            }
            const double ob = ref_iou(dets[self].box, dets[*best].box);
            if (o > ob || (o == ob && dets[k].raw_score > dets[*best].raw_score)) best = k;
        }
        out[static_cast<std::size_t>(j)] = best;
    }
    return out;
}

}  // namespace

TEST_CASE("correspondences pick the max-overlap partner per detector") {
    std::vector<Detection> dets = {
        det(0, 0, 0, 10, 10, 0.9),   // self
        det(1, 1, 1, 10, 10, 0.5),   // strong overlap
        det(1, 5, 5, 10, 10, 0.99),  // weaker overlap, higher score
        det(2, 50, 50, 5, 5, 0.7),   // disjoint
    };
    const auto c = correspondences(dets, 0, 3);
    REQUIRE(c.slots.size() == 3);
    CHECK(c.slots[0].partner == std::optional<std::size_t>(0));
    CHECK(c.slots[0].gamma == 1.0);
    CHECK(c.slots[1].partner == std::optional<std::size_t>(1));
    CHECK(c.slots[1].gamma == doctest::Approx(iou(dets[0].box, dets[1].box)));
    CHECK_FALSE(c.slots[2].partner.has_value());
    CHECK(c.slots[2].gamma == 0.0);
}

TEST_CASE("correspondence ties prefer higher score then lower index") {
    std::vector<Detection> dets = {
        det(0, 0, 0, 10, 10, 0.9),
        det(1, 2, 0, 10, 10, 0.3),
        det(1, -2, 0, 10, 10, 0.6),  // same IoU as index 1, higher score
        det(1, 0, 2, 10, 10, 0.6),   // same IoU and score as index 2, later
    };
    const auto c = correspondences(dets, 0, 2);
    CHECK(c.slots[1].partner == std::optional<std::size_t>(2));
}

TEST_CASE("correspondences reject detector ids outside the roster") {
    std::vector<Detection> dets = {det(0, 0, 0, 10, 10, 0.9), det(3, 0, 0, 10, 10, 0.9)};
    CHECK_THROWS_AS(correspondences(dets, 0, 2), DataError);
}

TEST_CASE("correspondences agree with brute force on random groups") {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const int n_det = 1 + static_cast<int>(rng.below(4));
        std::vector<Detection> dets;
        const auto n = 1 + rng.below(12);
        for (std::size_t i = 0; i < n; ++i) {
            // Coarse scores and a small canvas so ties and overlaps both occur.
            dets.push_back(Detection{"img", 0, static_cast<int>(rng.below(static_cast<std::uint64_t>(n_det))),
                                     random_box(rng, 30.0), static_cast<double>(rng.below(4)) / 4.0, std::nullopt});
        }
        for (std::size_t s = 0; s < dets.size(); ++s) {
            const auto c = correspondences(dets, s, n_det);
            const auto want = brute_partners(dets, s, n_det);
            for (int j = 0; j < n_det; ++j) {
                CHECK(c.slots[static_cast<std::size_t>(j)].partner == want[static_cast<std::size_t>(j)]);
            }
        }
    }
}
