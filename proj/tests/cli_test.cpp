// Runs the built command-line tool as a subprocess.
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

Outcome run(const std::string& args) {
    const std::string cmd = std::string(DETFUSE_CLI) + " " + args + " 2>&1";
    Outcome r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

class ScratchDir {
public:
    ScratchDir() {
        path_ = std::filesystem::temp_directory_path() / ("detfuse_cli_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace

TEST_CASE("help lists every subcommand, configuration key and exit code") {
    const auto r = run("--help");
    CHECK(r.code == 0);
    for (const char* s : {"simulate", "calibrate", "featurize", "train", "rerank", "eval", "analyze", "bound"}) {
        CHECK(r.out.find(s) != std::string::npos);
    }
    for (const char* k : {"sim.images.train", "detector.*.skill", "proposals.*.count", "learner.loss", "learner.C",
                          "features.map", "nms.coverage", "nms.all_pairs", "rerank.mode", "eval.protocol",
                          "calibration.pooled", "analyze.groups", "bound.greedy"}) {
        CAPTURE(k);
        CHECK(r.out.find(k) != std::string::npos);
    }
    CHECK(r.out.find("Exit codes") != std::string::npos);
    const auto sub = run("train --help");
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--loss") != std::string::npos);
}

TEST_CASE("usage and data errors map to exit codes") {
    CHECK(run("").code == 1);
    CHECK(run("fly").code == 1);
    CHECK(run("simulate --set bogus.key=1").code == 1);
    CHECK(run("simulate --set detectors=a --set classes=x").code == 1);  // no seed
    const auto missing = run("calibrate -c /nonexistent.scenario");
    CHECK(missing.code == 2);
    CHECK(missing.out.find("detfuse:") != std::string::npos);
}

TEST_CASE("a short run prints the evaluation summary") {
    ScratchDir dir;
    const std::string cfg = (dir.path() / "run.cfg").string();
    std::ofstream(cfg) << "detectors = p,q\nclasses = cat,car\nseed = 4\n"
                          "sim.images.train = 15\nsim.images.val = 15\nsim.images.test = 20\n";
    const std::string common = "-c " + cfg + " -o " + (dir.path() / "out").string();
    CHECK(run("simulate " + common).code == 0);
    CHECK(run("calibrate " + common).code == 0);
    CHECK(run("featurize " + common).code == 0);
    CHECK(run("train " + common + " --loss pow2 --C 1").code == 0);
    CHECK(run("rerank " + common + " -m learned").code == 0);
    const auto e = run("eval " + common + " -m learned");
    CHECK(e.code == 0);
    CHECK(e.out.find("mAP voc07-11point") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path() / "out" / "eval" / "learned.csv"));
    const auto ap = run("eval " + common + " -m learned --protocol all-points");
    CHECK(ap.out.find("mAP all-points") != std::string::npos);
    CHECK(run("eval " + common + " -m naive-i").code == 2);  // ranked list not produced yet
}
