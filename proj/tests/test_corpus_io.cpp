#include <doctest.h>

#include <string>

#include "corpus_io.hpp"
#include "error.hpp"
#include "kvfile.hpp"
#include "test_support.hpp"

using namespace detfuse;

namespace {

const Roster kDetectors({"a", "b"});
const Roster kClasses({"cat", "dog", "car"});

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("roster validation and lookup") {
    CHECK_THROWS_AS(Roster({"a", "a"}), DataError);
    CHECK_THROWS_AS(Roster({""}), DataError);
    CHECK_THROWS_AS(Roster({"a,b"}), DataError);
    const auto r = Roster::from_list(" x, y ,z");
    CHECK(r.size() == 3);
    CHECK(r.id("y") == 1);
    CHECK(r.to_list() == "x,y,z");
    CHECK_FALSE(r.find("w").has_value());
    CHECK_THROWS_AS(r.id("w"), DataError);
    CHECK_THROWS_AS(r.name(3), DataError);
}

TEST_CASE("detection records round-trip through text") {
    const std::string text =
        "img1\tcat\ta\t1.000000\t2.000000\t30.500000\t40.250000\t0.750000\n"
        "\n"
        "img2\tcar\tb\t0.000000\t0.000000\t10.000000\t10.000000\t-1.250000\n"
        "img1\tdog\tb\t5.000000\t5.000000\t9.000000\t9.000000\t0.100000\n";
    const auto corpus = parse_detections(text, kDetectors, kClasses, "dets.tsv");
    REQUIRE(corpus.size() == 3);
    CHECK(corpus[0].box == BoundingBox(1, 2, 30.5, 40.25));
    CHECK(corpus[1].raw_score == -1.25);
    CHECK(corpus[2].detector_id == 1);
    REQUIRE(corpus.images().size() == 2);
    CHECK(corpus.images()[0].image_id == "img1");
    CHECK(corpus.images()[0].indices == std::vector<std::size_t>{0, 2});
    CHECK(format_detections(corpus) == "img1\tcat\ta\t1.000000\t2.000000\t30.500000\t40.250000\t0.750000\n"
                                       "img2\tcar\tb\t0.000000\t0.000000\t10.000000\t10.000000\t-1.250000\n"
                                       "img1\tdog\tb\t5.000000\t5.000000\t9.000000\t9.000000\t0.100000\n");
}

TEST_CASE("malformed detection records report file and line") {
    CHECK(message_of([] { parse_detections("img\tcat\ta\t1\t2\t3\n", kDetectors, kClasses, "f.tsv"); })
              .find("f.tsv:1") != std::string::npos);
    CHECK(message_of([] { parse_detections("\nimg\tcow\ta\t0\t0\t1\t1\t0.5\n", kDetectors, kClasses, "f.tsv"); })
              .find("f.tsv:2") != std::string::npos);
    CHECK_THROWS_AS(parse_detections("img\tcat\tz\t0\t0\t1\t1\t0.5\n", kDetectors, kClasses), DataError);
    CHECK_THROWS_AS(parse_detections("img\tcat\ta\t0\t0\t1\t1\tnan\n", kDetectors, kClasses), DataError);
    CHECK_THROWS_AS(parse_detections("img\tcat\ta\t0\t0\t0\t1\t0.5\n", kDetectors, kClasses), DataError);
    CHECK_THROWS_AS(parse_detections("img\tcat\ta\t0\t0\tx\t1\t0.5\n", kDetectors, kClasses), DataError);
}

TEST_CASE("calibrated scores must lie inside (0, 1)") {
    DetectionCorpus c(kDetectors, kClasses);
    c.add({"img", 0, 0, BoundingBox(0, 0, 1, 1), 0.3, std::nullopt});
    CHECK_THROWS_AS(c.set_calibrated(0, 1.0), DataError);
    CHECK_THROWS_AS(c.set_calibrated(0, 0.0), DataError);
    c.set_calibrated(0, 0.4);
    CHECK(c[0].score(true) == 0.4);
    CHECK(c[0].score(false) == 0.3);
    CHECK_THROWS_AS(c.add({"img", 0, 2, BoundingBox(0, 0, 1, 1), 0.3, std::nullopt}), DataError);
}

TEST_CASE("restricting to one detector re-rosters the corpus") {
    const auto corpus = parse_detections("i\tcat\ta\t0\t0\t1\t1\t0.5\ni\tcat\tb\t0\t0\t2\t2\t0.6\n", kDetectors, kClasses);
    const auto only_b = corpus.restrict_to_detector(1);
    REQUIRE(only_b.size() == 1);
    CHECK(only_b.detectors().names() == std::vector<std::string>{"b"});
    CHECK(only_b[0].detector_id == 0);
    CHECK(only_b[0].raw_score == 0.6);
}

TEST_CASE("ground truth records") {
    const auto gt = parse_ground_truth("img\tdog\t0\t0\t5\t5\t1\nimg\tcat\t1\t1\t4\t4\t0\n", kClasses);
    REQUIRE(gt.objects.size() == 2);
    CHECK(gt.objects[0].difficult);
    CHECK_FALSE(gt.objects[1].difficult);
    CHECK(format_ground_truth(gt) == "img\tdog\t0.000000\t0.000000\t5.000000\t5.000000\t1\n"
                                     "img\tcat\t1.000000\t1.000000\t4.000000\t4.000000\t0\n");
    CHECK_THROWS_AS(parse_ground_truth("img\tdog\t0\t0\t5\t5\t2\n", kClasses), DataError);
}

TEST_CASE("proposal records enforce the confidence column by source") {
    const auto set = parse_proposals("img\tOBJ\t0\t0\t5\t5\t-\nimg\tEES\t1\t1\t4\t4\t0.8\n");
    REQUIRE(set.records().size() == 2);
    const auto& p = set.image("img");
    CHECK(p.by_source[0].size() == 1);
    CHECK(p.by_source[2].at(0).confidence == std::optional<double>(0.8));
    CHECK(set.image("other").by_source[1].empty());
    CHECK_THROWS_AS(parse_proposals("img\tEES\t0\t0\t5\t5\t-\n"), DataError);
    CHECK_THROWS_AS(parse_proposals("img\tCORE\t0\t0\t5\t5\t0.5\n"), DataError);
    CHECK_THROWS_AS(parse_proposals("img\tXYZ\t0\t0\t5\t5\t-\n"), DataError);
    CHECK(format_proposals(set) == "img\tOBJ\t0.000000\t0.000000\t5.000000\t5.000000\t-\n"
                                   "img\tEES\t1.000000\t1.000000\t4.000000\t4.000000\t0.800000\n");
}

TEST_CASE("split manifests resolve paths and enforce the cross-fold rule") {
    testing_support::TempDir dir("split");
    const auto write_manifest = [&](const std::string& train_prov, const std::string& test_prov) {
        write_file(dir.path() / "split.manifest",
                   "fold.train.detections = train.det\nfold.train.ground_truth = train.gt\n"
                   "fold.train.provenance = " + train_prov + "\n"
                   "fold.val.detections = val.det\nfold.val.ground_truth = val.gt\nfold.val.provenance = train\n"
                   "fold.test.detections = /abs/test.det\nfold.test.ground_truth = test.gt\n"
                   "fold.test.provenance = " + test_prov + "\n");
        return load_split_manifest(dir.path() / "split.manifest");
    };

    const auto ok = write_manifest("val", "trainval");
    CHECK(ok.fold("train").detections == dir.path() / "train.det");
    CHECK(ok.fold("test").detections == std::filesystem::path("/abs/test.det"));
    CHECK_NOTHROW(assemble_split(ok));

    CHECK(message_of([&] { assemble_split(write_manifest("train", "trainval")); }).find("cross-fold violation") !=
          std::string::npos);
    CHECK_THROWS_AS(assemble_split(write_manifest("trainval", "trainval")), DataError);
    CHECK_THROWS_AS(assemble_split(write_manifest("val", "test")), DataError);
    CHECK_THROWS_AS(assemble_split(write_manifest("val", "bogus")), DataError);

    SplitManifest missing;
    missing.folds["train"] = {"a", "b", "", "val"};
    CHECK_THROWS_AS(assemble_split(missing), DataError);

    write_file(dir.path() / "bad.manifest", "fold.train.colour = red\n");
    CHECK_THROWS_AS(load_split_manifest(dir.path() / "bad.manifest"), DataError);
}

TEST_CASE("number formatting") {
    CHECK(format_fixed6(-0.0000001) == "0.000000");
    CHECK(format_fixed6(1.5) == "1.500000");
    CHECK(parse_double("+2.5", "x") == 2.5);
    CHECK_THROWS_AS(parse_double("inf", "x"), DataError);
    CHECK_THROWS_AS(parse_double("1.5x", "x"), DataError);
    const double v = 0.1 + 0.2;
    CHECK(parse_double(format_exact(v), "x") == v);
}

TEST_CASE("key value files") {
    const auto kv = KeyValueFile::parse("# comment\na = 1\n b=x y \nlist = 1, 2,3\nflag = on\n", "cfg");
    CHECK(kv.get_int("a", 0) == 1);
    CHECK(kv.get_or("b", "") == "x y");
    CHECK(kv.get_doubles("list") == std::vector<double>{1, 2, 3});
    CHECK(kv.get_bool("flag", false));
    CHECK(kv.get_double("missing", 4.5) == 4.5);
    CHECK_THROWS_AS(kv.require("missing"), DataError);
    CHECK_THROWS_AS(KeyValueFile::parse("no equals sign\n"), DataError);
}
