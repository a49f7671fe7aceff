#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "calibration.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "random.hpp"

using namespace detfuse;

namespace {

std::vector<LabeledScore> reference_set() {
    const double x[] = {-2.0, -1.5, -1.0, -0.5, 0.0, 0.3, 0.5, 1.0, 1.5, 2.0, -0.2, 0.8};
    const int y[] = {0, 0, 0, 1, 0, 1, 0, 1, 1, 1, 0, 1};
    std::vector<LabeledScore> v;
    for (int i = 0; i < 12; ++i) v.push_back({x[i], y[i] == 1});
    return v;
}

}  // namespace

TEST_CASE("sigmoid evaluation is stable at the extremes") {
    CHECK(apply_platt({1.0, 0.0}, 0.0) == 0.5);
    CHECK(apply_platt({-1.0, 0.0}, 800.0) == doctest::Approx(1.0));
    CHECK(apply_platt({1.0, 0.0}, 800.0) >= 0.0);
    CHECK(std::isfinite(apply_platt({1.0, 0.0}, -800.0)));
    CHECK(apply_platt({-2.0, 1.0}, 0.5) == doctest::Approx(1.0 / (1.0 + std::exp(0.0))));
}

TEST_CASE("sigmoid fit matches an independent quasi-Newton solution") {
    // Reference minimum from a BFGS run on the same regularized-target cross-entropy.
    const auto fit = fit_platt_detailed(reference_set());
    CHECK(fit.params.alpha == doctest::Approx(-1.13061265).epsilon(1e-6));
    CHECK(fit.params.beta == doctest::Approx(0.10824137).epsilon(1e-5));
    CHECK(fit.objective == doctest::Approx(6.583825234104042).epsilon(1e-9));
}

TEST_CASE("sigmoid gradient matches finite differences") {
    const auto data = reference_set();
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const PlattParams p{rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const auto [ga, gb] = platt_gradient(p, data);
        const double h = 1e-6;
        const double fa = (platt_objective({p.alpha + h, p.beta}, data) - platt_objective({p.alpha - h, p.beta}, data)) /
                          (2 * h);
        const double fb = (platt_objective({p.alpha, p.beta + h}, data) - platt_objective({p.alpha, p.beta - h}, data)) /
                          (2 * h);
        CHECK(ga == doctest::Approx(fa).epsilon(1e-6));
        CHECK(gb == doctest::Approx(fb).epsilon(1e-6));
    }
}

TEST_CASE("sigmoid fit is invariant to input order") {
    auto data = reference_set();
    const auto base = fit_platt(data);
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        for (std::size_t i = data.size(); i > 1; --i) std::swap(data[i - 1], data[rng.below(i)]);
        const auto p = fit_platt(data);
        CHECK(p.alpha == base.alpha);
        CHECK(p.beta == base.beta);
    }
}

TEST_CASE("separable data orders every positive above every negative") {
    std::vector<LabeledScore> data;
    for (int i = 0; i < 20; ++i) data.push_back({-3.0 + 0.1 * i, false});
    for (int i = 0; i < 15; ++i) data.push_back({1.0 + 0.2 * i, true});
    const auto p = fit_platt(data);
    double min_pos = 1.0, max_neg = 0.0;
    for (const auto& d : data) {
        const double f = apply_platt(p, d.score);
        if (d.positive) min_pos = std::min(min_pos, f);
        else max_neg = std::max(max_neg, f);
    }
    CHECK(min_pos > max_neg);
    CHECK(p.alpha < 0.0);
}

TEST_CASE("degenerate calibration sets are rejected") {
    CHECK_THROWS_AS(fit_platt(std::vector<LabeledScore>{{0.1, true}, {0.2, true}}), DataError);
    CHECK_THROWS_AS(fit_platt(std::vector<LabeledScore>{}), DataError);
    CHECK_THROWS_AS(fit_platt(std::vector<LabeledScore>{{NAN, true}, {0.2, false}}), DataError);
}

TEST_CASE("calibration tables round-trip exactly") {
    const Roster dets({"a", "b"});
    const Roster cls({"x", "y"});
    CalibrationTable t;
    t.set(0, 1, {-1.0 / 3.0, 0.1 + 0.2});
    t.set(1, 0, {-7.25, 1e-300});
    const auto text = t.format(dets, cls);
    const auto back = CalibrationTable::parse(text, dets, cls);
    CHECK(back.entries() == t.entries());
    CHECK_THROWS_AS(CalibrationTable::parse("a\tx\t1\n", dets, cls), DataError);
    CHECK_THROWS_AS(CalibrationTable::parse("q\tx\t1\t2\n", dets, cls), DataError);
}

namespace {

// Two detectors, one class; detector 1 reports scores on a different scale.
struct Fixture {
    Roster dets{std::vector<std::string>{"a", "b"}};
    Roster cls{std::vector<std::string>{"x"}};
    DetectionCorpus corpus{dets, cls};
    GroundTruthSet gt{cls, {}};

    Fixture() {
        Rng rng(21);
        for (int i = 0; i < 60; ++i) {
            const std::string img = "img" + std::to_string(100 + i);
            gt.objects.push_back({img, 0, BoundingBox(10, 10, 50, 50), false});
            for (int j = 0; j < 2; ++j) {
                const double scale = j == 0 ? 1.0 : 10.0;
                const bool hit = rng.uniform() < 0.7;
                const auto box = hit ? BoundingBox(11, 10, 50, 51) : BoundingBox(60, 60, 90, 90);
                const double s = (hit ? rng.normal(0.7, 0.2) : rng.normal(0.3, 0.2)) * scale;
                corpus.add({img, 0, j, box, s, std::nullopt});
            }
        }
    }
};

}  // namespace

TEST_CASE("per-detector AP is unchanged by calibration") {
    Fixture f;
    const GroundTruthIndex gt(f.gt);
    const DetectionCorpus* corpora[] = {&f.corpus};
    const GroundTruthIndex* truths[] = {&gt};
    const auto table = fit_calibration_table(corpora, truths, false);
    REQUIRE(table.entries().size() == 2);
    auto calibrated = f.corpus;
    apply_calibration(calibrated, table);
    for (int j = 0; j < 2; ++j) {
        std::vector<ScoredDetection> raw, cal;
        for (const auto& d : calibrated.detections()) {
            if (d.detector_id != j) continue;
            raw.push_back({d, d.raw_score, false});
            cal.push_back({d, *d.calibrated_score, false});
        }
        for (const auto protocol : {ApProtocol::Voc07ElevenPoint, ApProtocol::AllPoints}) {
            CHECK(evaluate(raw, gt).mean_ap(protocol) == evaluate(cal, gt).mean_ap(protocol));
        }
    }
}

TEST_CASE("calibration requires parameters for every detection") {
    Fixture f;
    CalibrationTable table;
    table.set(0, 0, {-1.0, 0.0});
    CHECK_THROWS_AS(apply_calibration(f.corpus, table), DataError);
}

TEST_CASE("single-label classes fall back to the detector's pooled fit") {
    const Roster dets({"a"});
    const Roster cls({"x", "y"});
    DetectionCorpus corpus(dets, cls);
    GroundTruthSet gt{cls, {}};
    for (int i = 0; i < 10; ++i) {
        const std::string img = "i" + std::to_string(i);
        gt.objects.push_back({img, 0, BoundingBox(0, 0, 10, 10), false});
        corpus.add({img, 0, 0, BoundingBox(0, 0, 10, 10), 0.5 + 0.01 * i, std::nullopt});
        corpus.add({img, 0, 0, BoundingBox(50, 50, 60, 60), 0.1 + 0.01 * i, std::nullopt});
        corpus.add({img, 1, 0, BoundingBox(50, 50, 60, 60), 0.2, std::nullopt});  // class y: all negatives
    }
    const GroundTruthIndex index(gt);
    const DetectionCorpus* corpora[] = {&corpus};
    const GroundTruthIndex* truths[] = {&index};
    const auto table = fit_calibration_table(corpora, truths, false);
    REQUIRE(table.find(0, 1).has_value());
    std::vector<LabeledScore> pooled;
    const auto labels = detector_match_labels(corpus, index);
    for (std::size_t i = 0; i < corpus.size(); ++i) pooled.push_back({corpus[i].raw_score, *labels[i]});
    const auto expect = fit_platt(pooled);
    CHECK(table.find(0, 1)->alpha == expect.alpha);
    CHECK(table.find(0, 1)->beta == expect.beta);
}
