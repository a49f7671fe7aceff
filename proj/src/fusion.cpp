#include "fusion.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>

#include "error.hpp"
#include "kvfile.hpp"

namespace detfuse {

namespace {

auto content_key(const Detection& d) {
    return std::make_tuple(d.detector_id, d.box.x_min(), d.box.y_min(), d.box.x_max(), d.box.y_max(), d.raw_score);
}

// Rank order inside one class: score desc, image id, then box content.
bool ranks_before(const ScoredDetection& a, const ScoredDetection& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    if (a.detection.image_id != b.detection.image_id) return a.detection.image_id < b.detection.image_id;
    return content_key(a.detection) < content_key(b.detection);
}

double calibrated_or_throw(const DetectionCorpus& corpus, const Detection& d) {
    if (!d.calibrated_score) {
        throw DataError("missing calibrated score for detector '" + corpus.detectors().name(d.detector_id) +
                        "' on image '" + d.image_id + "'");
    }
    return *d.calibrated_score;
}

std::vector<int> resolve_order(std::span<const int> order, int n) {
    std::vector<int> out(order.begin(), order.end());
    if (out.empty()) {
        out.resize(static_cast<std::size_t>(n));
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    auto sorted = out;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(static_cast<std::size_t>(n));
    std::iota(expect.begin(), expect.end(), 0);
    if (sorted != expect) throw UsageError("detector order must list every detector exactly once");
    return out;
}

}  // namespace

void sort_ranked(RankedDetectionList& list) {
    std::stable_sort(list.begin(), list.end(), [](const ScoredDetection& a, const ScoredDetection& b) {
        if (a.detection.class_id != b.detection.class_id) return a.detection.class_id < b.detection.class_id;
        return ranks_before(a, b);
    });
}

std::vector<char> cross_nms(std::span<const Detection> dets, std::span<const double> scores, int n_detectors,
                            const NmsOptions& options) {
    const std::size_t n = dets.size();
    if (scores.size() != n) throw UsageError("cross_nms needs one score per detection");
    std::vector<char> suppressed(n, 0);
    if (!options.enabled || n < 2) return suppressed;

    std::vector<std::vector<char>> linked(n, std::vector<char>(n, options.all_pairs ? 1 : 0));
    if (!options.all_pairs) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto corr = correspondences(dets, i, n_detectors);
            for (const auto& slot : corr.slots) {
                if (slot.partner && *slot.partner != i) {
                    linked[i][*slot.partner] = 1;
                    linked[*slot.partner][i] = 1;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (dets[a].image_id != dets[b].image_id) return dets[a].image_id < dets[b].image_id;
        return content_key(dets[a]) < content_key(dets[b]);
    });

    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t keep = order[r];
        if (suppressed[keep]) continue;
        for (std::size_t q = r + 1; q < n; ++q) {
            const std::size_t other = order[q];
            if (suppressed[other] || !linked[keep][other]) continue;
            if (coverage(dets[other].box, dets[keep].box) >= options.coverage_threshold) suppressed[other] = 1;
        }
    }
    return suppressed;
}

void apply_nms(RankedDetectionList& list, int n_detectors, const NmsOptions& options) {
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < list.size(); ++i) {
        list[i].suppressed = false;
        groups[{list[i].detection.image_id, list[i].detection.class_id}].push_back(i);
    }
    if (!options.enabled) return;
    std::vector<Detection> dets;
    std::vector<double> scores;
    for (const auto& [key, idx] : groups) {
        dets.clear();
        scores.clear();
        for (const auto i : idx) {
            dets.push_back(list[i].detection);
            scores.push_back(list[i].final_score);
        }
        const auto flags = cross_nms(dets, scores, n_detectors, options);
        for (std::size_t k = 0; k < idx.size(); ++k) list[idx[k]].suppressed = flags[k] != 0;
    }
}

std::string_view naive_mode_name(NaiveMode mode) {
    switch (mode) {
        case NaiveMode::I: return "naive-i";
        case NaiveMode::II: return "naive-ii";
        case NaiveMode::III: return "naive-iii";
    }
    return "?";
}

RankedDetectionList naive_merge(const DetectionCorpus& corpus, NaiveMode mode, std::span<const int> detector_order,
                                const NmsOptions& nms) {
    const int n_det = corpus.detectors().size();
    const auto order = resolve_order(detector_order, n_det);
    RankedDetectionList list;
    list.reserve(corpus.size());
    for (const auto& d : corpus.detections()) list.push_back({d, calibrated_or_throw(corpus, d), false});

    if (mode != NaiveMode::I) {
        // Per class, per detector lists in calibrated-score order.
        sort_ranked(list);
        RankedDetectionList merged;
        merged.reserve(list.size());
        std::size_t begin = 0;
        while (begin < list.size()) {
            const int cls = list[begin].detection.class_id;
            std::size_t end = begin;
            while (end < list.size() && list[end].detection.class_id == cls) ++end;
            std::vector<std::vector<const ScoredDetection*>> per_det(static_cast<std::size_t>(n_det));
            for (std::size_t i = begin; i < end; ++i) {
                per_det[static_cast<std::size_t>(list[i].detection.detector_id)].push_back(&list[i]);
            }
            std::vector<const ScoredDetection*> seq;
            if (mode == NaiveMode::II) {
                std::vector<std::size_t> cursor(static_cast<std::size_t>(n_det), 0);
                bool any = true;
                while (any) {
                    any = false;
                    for (const int j : order) {
                        auto& c = cursor[static_cast<std::size_t>(j)];
                        const auto& v = per_det[static_cast<std::size_t>(j)];
                        if (c < v.size()) {
                            seq.push_back(v[c++]);
                            any = true;
                        }
                    }
                }
            } else {
                for (const int j : order) {
                    const auto& v = per_det[static_cast<std::size_t>(j)];
                    seq.insert(seq.end(), v.begin(), v.end());
                }
            }
            const double total = static_cast<double>(seq.size());
            for (std::size_t p = 0; p < seq.size(); ++p) {
                ScoredDetection s = *seq[p];
                s.final_score = 1.0 - static_cast<double>(p) / total;
                merged.push_back(std::move(s));
            }
            begin = end;
        }
        list = std::move(merged);
    }
    apply_nms(list, n_det, nms);
    sort_ranked(list);
    return list;
}

RankedDetectionList rerank(const DetectionCorpus& corpus, std::span<const RankerModel> models,
                           const FeatureTable& features, const NmsOptions& nms) {
    if (features.values.size() != corpus.size() * features.dim) {
        throw DataError("feature table does not match the corpus");
    }
    const int n_cls = corpus.classes().size();
    std::vector<const RankerModel*> by_class(static_cast<std::size_t>(n_cls), nullptr);
    const RankerModel* pooled = nullptr;
    for (const auto& m : models) {
        if (m.class_id < 0) {
            pooled = &m;
        } else if (m.class_id < n_cls) {
            by_class[static_cast<std::size_t>(m.class_id)] = &m;
        } else {
            throw DataError("ranker model for class id outside the roster");
        }
    }
    RankedDetectionList list;
    list.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& d = corpus[i];
        const RankerModel* m = by_class[static_cast<std::size_t>(d.class_id)];
        if (!m) m = pooled;
        if (!m) throw DataError("no ranker model for class '" + corpus.classes().name(d.class_id) + "'");
        list.push_back({d, score(*m, features.row(i)), false});
    }
    apply_nms(list, corpus.detectors().size(), nms);
    sort_ranked(list);
    return list;
}

RankedDetectionList detector_baseline(const DetectionCorpus& corpus, int detector_id, bool use_calibrated) {
    RankedDetectionList list;
    for (const auto& d : corpus.detections()) {
        if (d.detector_id != detector_id) continue;
        list.push_back({d, use_calibrated ? calibrated_or_throw(corpus, d) : d.raw_score, false});
    }
    sort_ranked(list);
    return list;
}

RankedDetectionList single_detector_rerank(const DetectionCorpus& single, std::span<const RankerModel> models,
                                           const FeatureTable& features, const NmsOptions& nms) {
    if (single.detectors().size() != 1) throw UsageError("single-detector re-ranking needs a one-detector corpus");
    return rerank(single, models, features, nms);
}

std::string format_ranked_list(const RankedDetectionList& list, const Roster& detectors, const Roster& classes,
                               bool with_suppressed) {
    std::string out;
    for (const auto& s : list) {
        if (s.suppressed && !with_suppressed) continue;
        out += format_detection_record(s.detection, detectors, classes);
        out += '\t' + format_exact(s.final_score);
        if (with_suppressed) out += s.suppressed ? "\t1" : "\t0";
        out += '\n';
    }
    return out;
}

RankedDetectionList parse_ranked_list(const std::string& text, const Roster& detectors, const Roster& classes,
                                      const std::string& origin) {
    std::string records;
    std::vector<double> scores;
    std::vector<char> flags;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) {
            records += '\n';
            continue;
        }
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto f = split(line, '\t');
        if (f.size() != 9 && f.size() != 10) throw DataError(where + ": expected 9 or 10 tab-separated fields");
        for (std::size_t k = 0; k < 8; ++k) records += (k ? "\t" : "") + f[k];
        records += '\n';
        scores.push_back(parse_double(f[8], where + ": final score"));
        char flag = 0;
        if (f.size() == 10) {
            const auto t = trim(f[9]);
            if (t != "0" && t != "1") throw DataError(where + ": suppressed flag must be 0 or 1");
            flag = t == "1";
        }
        flags.push_back(flag);
    }
    const auto corpus = parse_detections(records, detectors, classes, origin);
    RankedDetectionList list;
    list.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) list.push_back({corpus[i], scores[i], flags[i] != 0});
    return list;
}

}  // namespace detfuse
