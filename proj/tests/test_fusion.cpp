#include <doctest.h>

#include <map>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "fusion.hpp"
#include "random.hpp"
#include "test_support.hpp"

using namespace detfuse;

namespace {

const Roster kDets({"A", "B"});
const Roster kClasses({"x", "y"});

Detection det(const std::string& img, int cls, int d, double x0, double score) {
    return Detection{img, cls, d, BoundingBox(x0, 0, x0 + 10, 10), score, score};
}

std::vector<std::pair<int, double>> order_of(const RankedDetectionList& list) {
    std::vector<std::pair<int, double>> out;
    for (const auto& s : list) {
        if (!s.suppressed) out.emplace_back(s.detection.detector_id, *s.detection.calibrated_score);
    }
    return out;
}

}  // namespace

TEST_CASE("round-robin merge alternates detectors with position scores") {
    DetectionCorpus c(kDets, kClasses);
    c.add(det("i1", 0, 0, 0, 0.9));
    c.add(det("i2", 0, 0, 100, 0.1));
    c.add(det("i3", 0, 1, 200, 0.8));
    c.add(det("i4", 0, 1, 300, 0.7));
    const auto list = naive_merge(c, NaiveMode::II);
    CHECK(order_of(list) == std::vector<std::pair<int, double>>{{0, 0.9}, {1, 0.8}, {0, 0.1}, {1, 0.7}});
    REQUIRE(list.size() == 4);
    CHECK(list[0].final_score == doctest::Approx(1.0));
    CHECK(list[1].final_score == doctest::Approx(0.75));
    CHECK(list[2].final_score == doctest::Approx(0.5));
    CHECK(list[3].final_score == doctest::Approx(0.25));

    // Detector B first.
    const int order[] = {1, 0};
    CHECK(order_of(naive_merge(c, NaiveMode::II, order)) ==
          std::vector<std::pair<int, double>>{{1, 0.8}, {0, 0.9}, {1, 0.7}, {0, 0.1}});
    // Whole lists one after another.
    CHECK(order_of(naive_merge(c, NaiveMode::III, order)) ==
          std::vector<std::pair<int, double>>{{1, 0.8}, {1, 0.7}, {0, 0.9}, {0, 0.1}});
    // Union by calibrated score.
    CHECK(order_of(naive_merge(c, NaiveMode::I)) ==
          std::vector<std::pair<int, double>>{{0, 0.9}, {1, 0.8}, {1, 0.7}, {0, 0.1}});

    const int bad[] = {0, 0};
    CHECK_THROWS_AS(naive_merge(c, NaiveMode::II, bad), UsageError);
}

TEST_CASE("round-robin skips exhausted lists") {
    DetectionCorpus c(kDets, kClasses);
    c.add(det("i1", 1, 0, 0, 0.9));
    c.add(det("i2", 1, 1, 0, 0.8));
    c.add(det("i3", 1, 1, 0, 0.6));
    c.add(det("i4", 1, 1, 0, 0.5));
    CHECK(order_of(naive_merge(c, NaiveMode::II)) ==
          std::vector<std::pair<int, double>>{{0, 0.9}, {1, 0.8}, {1, 0.6}, {1, 0.5}});
}

TEST_CASE("merges need calibrated scores") {
    DetectionCorpus c(kDets, kClasses);
    c.add({"i", 0, 0, BoundingBox(0, 0, 1, 1), 0.3, std::nullopt});
    CHECK_THROWS_AS(naive_merge(c, NaiveMode::I), DataError);
}

TEST_CASE("cross-detector suppression by coverage") {
    SUBCASE("identical boxes from two detectors") {
        const std::vector<Detection> d = {det("i", 0, 0, 0, 0.9), det("i", 0, 1, 0, 0.8)};
        const std::vector<double> s = {0.9, 0.8};
        CHECK(cross_nms(d, s, 2) == std::vector<char>{0, 1});
    }
    SUBCASE("coverage below the threshold") {
        const std::vector<Detection> d = {det("i", 0, 0, 0, 0.9), det("i", 0, 1, 7, 0.8)};
        const std::vector<double> s = {0.9, 0.8};
        CHECK(cross_nms(d, s, 2) == std::vector<char>{0, 0});
    }
    SUBCASE("suppressed boxes do not suppress") {
        // a and c come from the same detector and are not linked; b links to both.
        const std::vector<Detection> d = {det("i", 0, 0, 0, 0.9), det("i", 0, 1, 3, 0.8), det("i", 0, 0, 6, 0.7)};
        const std::vector<double> s = {0.9, 0.8, 0.7};
        CHECK(cross_nms(d, s, 2) == std::vector<char>{0, 1, 0});
        NmsOptions classic;
        classic.all_pairs = true;
        CHECK(cross_nms(d, s, 2, classic) == std::vector<char>{0, 1, 1});
        NmsOptions off;
        off.enabled = false;
        CHECK(cross_nms(d, s, 2, off) == std::vector<char>{0, 0, 0});
    }
    SUBCASE("suppression follows the final score, not the raw score") {
        const std::vector<Detection> d = {det("i", 0, 0, 0, 0.9), det("i", 0, 1, 0, 0.8)};
        const std::vector<double> s = {0.1, 0.2};
        CHECK(cross_nms(d, s, 2) == std::vector<char>{1, 0});
    }
}

namespace {

DetectionCorpus random_corpus(Rng& rng, int n_images, const std::vector<std::size_t>& order = {}) {
    std::vector<Detection> all;
    for (int i = 0; i < n_images; ++i) {
        const int n = static_cast<int>(rng.below(8));
        for (int k = 0; k < n; ++k) {
            const double s = 0.05 + 0.1 * static_cast<double>(rng.below(9));
            all.push_back({"img" + std::to_string(i), static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2)),
                           testing_support::random_box(rng, 40.0), s, s});
        }
    }
    DetectionCorpus c(kDets, kClasses);
    if (order.empty()) {
        for (const auto& d : all) c.add(d);
    } else {
        for (const auto i : order) c.add(all[i]);
    }
    return c;
}

}  // namespace

TEST_CASE("merged lists do not depend on input order") {
    for (int t = 0; t < 20; ++t) {
        Rng a(static_cast<std::uint64_t>(100 + t));
        const auto base = random_corpus(a, 15);
        std::vector<std::size_t> perm(base.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        Rng shuffle(static_cast<std::uint64_t>(t));
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[shuffle.below(i)]);
        Rng b(static_cast<std::uint64_t>(100 + t));
        const auto shuffled = random_corpus(b, 15, perm);
        for (auto mode : {NaiveMode::I, NaiveMode::II, NaiveMode::III}) {
            CAPTURE(naive_mode_name(mode));
            CHECK(format_ranked_list(naive_merge(base, mode), kDets, kClasses, true) ==
                  format_ranked_list(naive_merge(shuffled, mode), kDets, kClasses, true));
        }
    }
}

TEST_CASE("the top detection of each image and class survives suppression") {
    for (int t = 0; t < 20; ++t) {
        Rng rng(static_cast<std::uint64_t>(500 + t));
        const auto c = random_corpus(rng, 20);
        NmsOptions classic;
        classic.all_pairs = true;
        for (const auto& opts : {NmsOptions{}, classic}) {
            const auto list = naive_merge(c, NaiveMode::I, {}, opts);
            std::map<std::pair<std::string, int>, const ScoredDetection*> top;
            for (const auto& s : list) {
                auto& slot = top[{s.detection.image_id, s.detection.class_id}];
                if (!slot) slot = &s;  // list is already in rank order within a class
            }
            for (const auto& [key, s] : top) CHECK_FALSE(s->suppressed);
        }
    }
}

TEST_CASE("re-ranking with a model that reads the own relative score") {
    const Roster one({"A"});
    DetectionCorpus c(one, kClasses);
    c.add(det("i1", 0, 0, 0, 0.3));
    c.add(det("i1", 0, 0, 50, 0.8));
    c.add(det("i2", 0, 0, 0, 0.5));
    FeatureOptions fo;
    const auto table = compute_features(c, ProposalSet{}, fo);
    RankerModel m;
    m.class_id = -1;
    m.weights.assign(table.dim, 0.0);
    m.weights[1] = 1.0;  // R[A]: for a single detector this is its own calibrated score
    m.standardizer = Standardizer::identity(table.dim);
    const std::vector<RankerModel> models = {m};
    const auto list = single_detector_rerank(c, models, table);
    CHECK(order_of(list) == std::vector<std::pair<int, double>>{{0, 0.8}, {0, 0.5}, {0, 0.3}});
    CHECK(list[0].final_score == doctest::Approx(0.8));

    m.weights.assign(table.dim, 0.0);
    m.bias = 0.25;
    const std::vector<RankerModel> flat = {m};
    for (const auto& s : rerank(c, flat, table)) CHECK(s.final_score == 0.25);

    m.class_id = 1;
    const std::vector<RankerModel> wrong_class = {m};
    CHECK_THROWS_AS(rerank(c, wrong_class, table), DataError);
    Rng rng(1);
    CHECK_THROWS_AS(single_detector_rerank(random_corpus(rng, 3), flat, table), UsageError);
}

TEST_CASE("baseline lists keep one detector") {
    Rng rng(77);
    const auto c = random_corpus(rng, 10);
    const auto list = detector_baseline(c, 1);
    for (const auto& s : list) {
        CHECK(s.detection.detector_id == 1);
        CHECK(s.final_score == *s.detection.calibrated_score);
        CHECK_FALSE(s.suppressed);
    }
}

TEST_CASE("ranked lists round-trip through text") {
    Rng rng(9);
    const auto c = random_corpus(rng, 12);
    const auto list = naive_merge(c, NaiveMode::II);
    const auto text = format_ranked_list(list, kDets, kClasses, true);
    const auto back = parse_ranked_list(text, kDets, kClasses);
    CHECK(format_ranked_list(back, kDets, kClasses, true) == text);
    std::size_t kept = 0;
    for (const auto& s : list) kept += s.suppressed ? 0 : 1;
    CHECK(parse_ranked_list(format_ranked_list(list, kDets, kClasses, false), kDets, kClasses).size() == kept);
    CHECK_THROWS_AS(parse_ranked_list("i\tx\tA\t0\t0\t1\t1\n", kDets, kClasses), DataError);
}
