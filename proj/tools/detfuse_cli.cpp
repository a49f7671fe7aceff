// Command-line front end. Talks to the library only through the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "detfuse/detfuse.h"

namespace {

const char* const kSubcommands[][2] = {
    {"simulate", "generate ground truth, detections and proposals for train, val and test"},
    {"calibrate", "fit per detector/class sigmoids on the calibration folds"},
    {"featurize", "write context features for the training folds and the evaluation fold"},
    {"train", "fit one ranker per class on the training folds"},
    {"rerank", "produce a combined ranked list for the evaluation fold"},
    {"eval", "AP tables (text and CSV) for a ranked list"},
    {"analyze", "false-positive taxonomy, PR curves and feature importance"},
    {"bound", "maximal mAP for every subset of detectors"},
};

std::string key_reference() {
    std::string out = "Configuration keys (file lines 'key = value' or --set key=value):\n";
    for (size_t i = 0; i < df_config_key_count(); ++i) {
        std::string pattern = df_config_key_pattern(i);
        pattern.resize(std::max<size_t>(pattern.size(), 30), ' ');
        out += "  " + pattern + " " + df_config_key_help(i) + "\n";
    }
    out += "\nExit codes: 0 success, 1 usage error, 2 data validation error, 3 numeric failure.\n";
    return out;
}

int report(df_status status) {
    std::cerr << "detfuse: " << df_last_error() << "\n";
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Detection fusion toolkit: combine the outputs of several object detectors by calibrated "
                 "merging or learned re-ranking, and evaluate the result."};
    app.footer(key_reference());
    app.set_version_flag("--version", std::string(df_version()));
    app.require_subcommand(1);

    std::vector<std::string> configs;
    std::vector<std::string> overrides;
    std::string out, seed, mode, single, fold, protocol, loss, cost;

    for (const auto& sc : kSubcommands) {
        auto* sub = app.add_subcommand(sc[0], sc[1]);
        sub->add_option("-c,--config", configs, "key = value configuration file; repeatable, later files win");
        sub->add_option("-s,--set", overrides, "override one key, key=value; repeatable, applied last");
        sub->add_option("-o,--out", out, "output directory (key 'out')");
        sub->add_option("--seed", seed, "master seed (key 'seed')");
        sub->add_option("--fold", fold, "fold to rerank/evaluate (key 'eval.fold')");
        sub->add_option("--protocol", protocol, "voc07 or all-points (key 'eval.protocol')");
        const std::string name = sc[0];
        if (name == "rerank" || name == "eval" || name == "analyze") {
            sub->add_option("-m,--mode", mode,
                            "learned, naive-i, naive-ii, naive-iii, single:<detector>, baseline:<detector> "
                            "(key 'rerank.mode')");
        }
        if (name == "featurize" || name == "train") {
            sub->add_option("--single", single, "single-detector variant for this detector (key 'single')");
        }
        if (name == "train") {
            sub->add_option("--loss", loss, "pow1, pow2, pow3 or paw1 (key 'learner.loss')");
            sub->add_option("--C", cost, "regularization constant (key 'learner.C')");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(DF_ERR_USAGE);
    }

    const auto* sub = app.get_subcommands().front();
    df_config* config = nullptr;
    if (df_status st = df_config_create(&config); st != DF_OK) return report(st);

    df_status st = DF_OK;
    for (const auto& path : configs) {
        if ((st = df_config_load(config, path.c_str())) != DF_OK) break;
    }
    const std::pair<const char*, const std::string*> flags[] = {
        {"out", &out},           {"seed", &seed},         {"rerank.mode", &mode},   {"single", &single},
        {"eval.fold", &fold},    {"eval.protocol", &protocol}, {"learner.loss", &loss}, {"learner.C", &cost},
    };
    for (const auto& [key, value] : flags) {
        if (st != DF_OK) break;
        if (!value->empty()) st = df_config_set(config, key, value->c_str());
    }
    for (const auto& o : overrides) {
        if (st != DF_OK) break;
        st = df_config_override(config, o.c_str());
    }
    if (st != DF_OK) {
        df_config_destroy(config);
        return report(st);
    }

    df_result* result = nullptr;
    st = df_run(config, sub->get_name().c_str(), &result);
    df_config_destroy(config);
    if (st != DF_OK) return report(st);
    std::fputs(df_result_summary(result), stdout);
    df_result_destroy(result);
    return 0;
}
