#include <doctest.h>

#include <filesystem>
#include <string>

#include "error.hpp"
#include "evaluation.hpp"
#include "fusion.hpp"
#include "kvfile.hpp"
#include "test_support.hpp"
#include "workflow.hpp"

using namespace detfuse;
using testing_support::TempDir;

namespace {

RunConfig small_config(const std::filesystem::path& out) {
    RunConfig c;
    c.set("out", out.string());
    c.set("detectors", "p,q");
    c.set("classes", "cat,car");
    c.set("seed", "7");
    c.set("sim.images.train", "25");
    c.set("sim.images.val", "25");
    c.set("sim.images.test", "30");
    c.set("detector.p.skill", "0.8,0.4");
    c.set("detector.q.skill", "0.4,0.8");
    return c;
}

void run_all(const RunConfig& c) {
    for (const char* sub : {"simulate", "calibrate", "featurize", "train", "rerank", "eval", "analyze", "bound"}) {
        CAPTURE(sub);
        run_subcommand(sub, c);
    }
}

std::string tree_text(const std::filesystem::path& root) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), root));
    }
    std::sort(files.begin(), files.end());
    std::string out;
    for (const auto& f : files) out += f.string() + "\n" + read_file(root / f) + "\n";
    return out;
}

}  // namespace

TEST_CASE("configuration keys are checked") {
    RunConfig c;
    CHECK_THROWS_AS(c.set("learner.colour", "red"), UsageError);
    CHECK_THROWS_AS(c.apply_override("no-equals"), UsageError);
    CHECK_NOTHROW(c.set("detector.anything.skill", "0.5"));
    CHECK_NOTHROW(c.set("proposals.ees.count", "5"));
    CHECK_THROWS_AS(c.seed(), UsageError);
    CHECK_THROWS_AS(run_subcommand("fly", small_config("/tmp/x")), UsageError);
    for (const auto& k : config_keys()) CHECK(std::string(k.help).size() > 0);
}

TEST_CASE("the configuration hash ignores the output directory") {
    auto a = small_config("/tmp/a");
    auto b = small_config("/tmp/b");
    CHECK(a.hash() == b.hash());
    b.set("learner.C", "2");
    CHECK(a.hash() != b.hash());
}

TEST_CASE("csv fields are quoted when needed") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
}

TEST_CASE("the file pipeline reproduces the in-process merge and evaluation") {
    TempDir dir("pipeline");
    auto c = small_config(dir.path());
    c.set("rerank.mode", "naive-i");
    for (const char* sub : {"simulate", "calibrate", "rerank"}) run_subcommand(sub, c);

    const auto test = load_fold(c, "test", true);
    const auto expect = naive_merge(test.corpus, NaiveMode::I, {}, c.nms_options());
    CHECK(read_file(dir.path() / "ranked" / "naive-i.tsv") ==
          format_ranked_list(expect, c.detectors(), c.classes(), true));

    const auto result = run_subcommand("eval", c);
    const GroundTruthIndex index(test.gt);
    const auto map = *evaluate(expect, index).mean_ap(ApProtocol::Voc07ElevenPoint);
    CHECK(result.summary.find("mAP voc07-11point " + format_fixed6(map) + " (naive-i)") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path() / "manifests" / "eval.naive-i.txt"));
}

TEST_CASE("identical configurations give byte-identical outputs") {
    TempDir a("det_a");
    TempDir b("det_b");
    run_all(small_config(a.path()));
    run_all(small_config(b.path()));
    const auto ta = tree_text(a.path());
    CHECK(ta.size() > 1000);
    CHECK(ta == tree_text(b.path()));
}

TEST_CASE("a split that reuses a fold for its own context is rejected") {
    TempDir dir("crossfold");
    auto c = small_config(dir.path());
    run_subcommand("simulate", c);
    const auto manifest = dir.path() / "data" / "split.manifest";
    auto text = read_file(manifest);
    const std::string from = "fold.train.provenance = val";
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), "fold.train.provenance = train");
    write_file(manifest, text);
    try {
        run_subcommand("calibrate", c);
        FAIL("expected a cross-fold violation");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("cross-fold violation") != std::string::npos);
    }
}

TEST_CASE("stages report missing inputs") {
    TempDir dir("missing");
    auto c = small_config(dir.path());
    CHECK_THROWS_AS(run_subcommand("calibrate", c), DataError);
    run_subcommand("simulate", c);
    c.set("rerank.mode", "learned");
    CHECK_THROWS_AS(run_subcommand("rerank", c), DataError);
}
