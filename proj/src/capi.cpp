#include "detfuse/detfuse.h"

#include <exception>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "calibration.hpp"
#include "corpus_io.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "geometry.hpp"
#include "workflow.hpp"

struct df_config {
    detfuse::RunConfig config;
};

struct df_result {
    std::string summary;
    std::vector<std::string> artifacts;
};

struct df_corpus {
    detfuse::DetectionCorpus corpus;
};

namespace {

thread_local std::string last_error;

df_status fail(df_status code, const std::string& message) {
    last_error = message;
    return code;
}

template <class F>
df_status guarded(F&& f) {
    try {
        last_error.clear();
        f();
        return DF_OK;
    } catch (const detfuse::UsageError& e) {
        return fail(DF_ERR_USAGE, e.what());
    } catch (const detfuse::DataError& e) {
        return fail(DF_ERR_DATA, e.what());
    } catch (const detfuse::NumericError& e) {
        return fail(DF_ERR_NUMERIC, e.what());
    } catch (const std::bad_alloc&) {
        return fail(DF_ERR_NUMERIC, "out of memory");
    } catch (const std::exception& e) {
        return fail(DF_ERR_DATA, e.what());
    }
}

detfuse::BoundingBox to_box(const double b[4]) { return detfuse::BoundingBox(b[0], b[1], b[2], b[3]); }

}  // namespace

extern "C" {

const char* df_version(void) { return DETFUSE_VERSION; }

const char* df_last_error(void) { return last_error.c_str(); }

df_status df_config_create(df_config** out) {
    if (!out) return fail(DF_ERR_USAGE, "null output pointer");
    return guarded([&] { *out = new df_config{}; });
}

void df_config_destroy(df_config* config) { delete config; }

df_status df_config_load(df_config* config, const char* path) {
    if (!config || !path) return fail(DF_ERR_USAGE, "null argument");
    return guarded([&] {
        const auto loaded = detfuse::RunConfig::load(path);
        for (const auto& [k, v] : loaded.values().values()) config->config.set(k, v);
    });
}

df_status df_config_set(df_config* config, const char* key, const char* value) {
    if (!config || !key || !value) return fail(DF_ERR_USAGE, "null argument");
    return guarded([&] { config->config.set(key, value); });
}

df_status df_config_override(df_config* config, const char* assignment) {
    if (!config || !assignment) return fail(DF_ERR_USAGE, "null argument");
    return guarded([&] { config->config.apply_override(assignment); });
}

const char* df_config_get(const df_config* config, const char* key) {
    if (!config || !key) return nullptr;
    const auto& values = config->config.values().values();
    const auto it = values.find(key);
    return it == values.end() ? nullptr : it->second.c_str();
}

size_t df_config_key_count(void) { return detfuse::config_keys().size(); }

const char* df_config_key_pattern(size_t index) {
    const auto& keys = detfuse::config_keys();
    return index < keys.size() ? keys[index].pattern : nullptr;
}

const char* df_config_key_help(size_t index) {
    const auto& keys = detfuse::config_keys();
    return index < keys.size() ? keys[index].help : nullptr;
}

df_status df_run(const df_config* config, const char* subcommand, df_result** out) {
    if (!config || !subcommand || !out) return fail(DF_ERR_USAGE, "null argument");
    *out = nullptr;
    return guarded([&] {
        const auto r = detfuse::run_subcommand(subcommand, config->config);
        auto result = std::make_unique<df_result>();
        result->summary = r.summary;
        for (const auto& a : r.artifacts) result->artifacts.push_back(a.generic_string());
        *out = result.release();
    });
}

const char* df_result_summary(const df_result* result) { return result ? result->summary.c_str() : ""; }

size_t df_result_artifact_count(const df_result* result) { return result ? result->artifacts.size() : 0; }

const char* df_result_artifact(const df_result* result, size_t index) {
    if (!result || index >= result->artifacts.size()) return nullptr;
    return result->artifacts[index].c_str();
}

void df_result_destroy(df_result* result) { delete result; }

df_status df_corpus_load(const char* path, const char* detectors, const char* classes, df_corpus** out) {
    if (!path || !detectors || !classes || !out) return fail(DF_ERR_USAGE, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto c = std::make_unique<df_corpus>();
        c->corpus = detfuse::load_detections(path, detfuse::Roster::from_list(detectors),
                                             detfuse::Roster::from_list(classes));
        *out = c.release();
    });
}

size_t df_corpus_size(const df_corpus* corpus) { return corpus ? corpus->corpus.size() : 0; }

size_t df_corpus_image_count(const df_corpus* corpus) { return corpus ? corpus->corpus.images().size() : 0; }

void df_corpus_destroy(df_corpus* corpus) { delete corpus; }

df_status df_iou(const double a[4], const double b[4], double* out) {
    if (!a || !b || !out) return fail(DF_ERR_USAGE, "null argument");
    return guarded([&] { *out = detfuse::iou(to_box(a), to_box(b)); });
}

df_status df_coverage(const double candidate[4], const double dominator[4], double* out) {
    if (!candidate || !dominator || !out) return fail(DF_ERR_USAGE, "null argument");
    return guarded([&] { *out = detfuse::coverage(to_box(candidate), to_box(dominator)); });
}

df_status df_apply_platt(double alpha, double beta, double score, double* out) {
    if (!out) return fail(DF_ERR_USAGE, "null argument");
    return guarded([&] { *out = detfuse::apply_platt({alpha, beta}, score); });
}

df_status df_average_precision(const unsigned char* hits, size_t n, size_t n_positives, df_protocol protocol,
                               double* out) {
    if ((!hits && n > 0) || !out) return fail(DF_ERR_USAGE, "null argument");
    if (protocol != DF_AP_VOC07 && protocol != DF_AP_ALL_POINTS) return fail(DF_ERR_USAGE, "unknown AP protocol");
    return guarded([&] {
        std::vector<char> h(n);
        for (size_t i = 0; i < n; ++i) h[i] = hits[i] ? 1 : 0;
        const auto ap = detfuse::average_precision(
            h, n_positives,
            protocol == DF_AP_VOC07 ? detfuse::ApProtocol::Voc07ElevenPoint : detfuse::ApProtocol::AllPoints);
        if (!ap) throw detfuse::DataError("average precision is undefined without positives");
        *out = *ap;
    });
}

}  // extern "C"
