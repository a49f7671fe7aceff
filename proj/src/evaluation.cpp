#include "evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "error.hpp"
#include "kvfile.hpp"

namespace detfuse {

std::string_view protocol_name(ApProtocol p) {
    return p == ApProtocol::Voc07ElevenPoint ? "voc07-11point" : "all-points";
}

ApProtocol parse_protocol(std::string_view name) {
    if (name == "voc07-11point" || name == "voc07" || name == "11point") return ApProtocol::Voc07ElevenPoint;
    if (name == "all-points" || name == "allpoints") return ApProtocol::AllPoints;
    throw UsageError("unknown AP protocol '" + std::string(name) + "'");
}

std::string_view fp_type_name(FpType t) {
    switch (t) {
        case FpType::Loc: return "Loc";
        case FpType::Sim: return "Sim";
        case FpType::Oth: return "Oth";
        case FpType::Bg: return "BG";
    }
    return "?";
}

std::vector<DetectionMatch> match(std::span<const BoundingBox> dets,
                                  std::span<const GroundTruthObject> gts, double iou_threshold) {
    std::vector<DetectionMatch> out(dets.size());
    std::vector<char> taken(gts.size(), 0);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        DetectionMatch& m = out[d];
        double best_free = -1.0;
        std::optional<std::size_t> best_free_idx;
        double best_difficult = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double o = iou(dets[d], gts[g].box);
            m.max_overlap = std::max(m.max_overlap, o);
            if (gts[g].difficult) {
                best_difficult = std::max(best_difficult, o);
            } else if (taken[g]) {
                if (o > iou_threshold) m.duplicate = true;
            } else if (o > best_free) {
                best_free = o;
                best_free_idx = g;
            }
        }
        if (best_free_idx && best_free > iou_threshold) {
            m.outcome = MatchOutcome::TruePositive;
            m.gt = best_free_idx;
            m.duplicate = false;
            taken[*best_free_idx] = 1;
        } else if (best_difficult > iou_threshold) {
            m.outcome = MatchOutcome::Ignored;
            m.duplicate = false;
        } else {
            m.outcome = MatchOutcome::FalsePositive;
        }
    }
    return out;
}

GroundTruthIndex::GroundTruthIndex(const GroundTruthSet& gt) : n_classes_(gt.classes.size()) {
    positives_.assign(static_cast<std::size_t>(n_classes_), 0);
    // Stable grouping by image, then by class, preserving file order within a group.
    std::map<std::string, std::vector<std::size_t>> per_image;
    for (std::size_t i = 0; i < gt.objects.size(); ++i) {
        const auto& o = gt.objects[i];
        if (o.class_id < 0 || o.class_id >= n_classes_) throw DataError("ground-truth class id out of range");
        per_image[o.image_id].push_back(i);
        if (!o.difficult) ++positives_[static_cast<std::size_t>(o.class_id)];
    }
    by_image_.reserve(gt.objects.size());
    for (auto& [image, idx] : per_image) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return gt.objects[a].class_id < gt.objects[b].class_id;
        });
        const std::size_t begin = by_image_.size();
        for (const auto i : idx) by_image_.push_back(gt.objects[i]);
        image_range_[image] = {begin, by_image_.size()};
    }
}

std::span<const GroundTruthObject> GroundTruthIndex::image(const std::string& image_id) const {
    const auto it = image_range_.find(image_id);
    if (it == image_range_.end()) return {};
    return std::span<const GroundTruthObject>(by_image_).subspan(it->second.first,
                                                                it->second.second - it->second.first);
}

std::span<const GroundTruthObject> GroundTruthIndex::objects(const std::string& image_id,
                                                             int class_id) const {
    const auto all = image(image_id);
    const auto lo = std::lower_bound(all.begin(), all.end(), class_id,
                                     [](const GroundTruthObject& o, int c) { return o.class_id < c; });
    const auto hi = std::upper_bound(lo, all.end(), class_id,
                                     [](int c, const GroundTruthObject& o) { return c < o.class_id; });
    return {lo, hi};
}

std::size_t GroundTruthIndex::positives(int class_id) const {
    if (class_id < 0 || class_id >= n_classes_) return 0;
    return positives_[static_cast<std::size_t>(class_id)];
}

std::optional<PRCurve> pr_curve(std::span<const char> hits, std::size_t n_positives,
                                ApProtocol protocol) {
    if (n_positives == 0) return std::nullopt;
    PRCurve curve;
    curve.protocol = protocol;
    curve.recall.reserve(hits.size());
    curve.precision.reserve(hits.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < hits.size(); ++k) {
        if (hits[k]) ++tp;
        curve.recall.push_back(static_cast<double>(tp) / static_cast<double>(n_positives));
        curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    }

    if (protocol == ApProtocol::Voc07ElevenPoint) {
        double sum = 0.0;
        for (int i = 0; i <= 10; ++i) {
            const double t = i / 10.0;
            double p = 0.0;
            for (std::size_t k = 0; k < hits.size(); ++k) {
                if (curve.recall[k] >= t) p = std::max(p, curve.precision[k]);
            }
            sum += p;
        }
        curve.ap = sum / 11.0;
        return curve;
    }

    // Area under the monotone precision envelope with sentinels (0, 0) and (1, 0).
    std::vector<double> mrec(hits.size() + 2);
    std::vector<double> mpre(hits.size() + 2);
    mrec.front() = 0.0;
    mpre.front() = 0.0;
    for (std::size_t k = 0; k < hits.size(); ++k) {
        mrec[k + 1] = curve.recall[k];
        mpre[k + 1] = curve.precision[k];
    }
    mrec.back() = 1.0;
    mpre.back() = 0.0;
    for (std::size_t i = mpre.size() - 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
    double ap = 0.0;
    for (std::size_t i = 0; i + 1 < mrec.size(); ++i) {
        if (mrec[i + 1] != mrec[i]) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
    }
    curve.ap = ap;
    return curve;
}

std::optional<double> average_precision(std::span<const char> hits, std::size_t n_positives,
                                        ApProtocol protocol) {
    const auto curve = pr_curve(hits, n_positives, protocol);
    if (!curve) return std::nullopt;
    return curve->ap;
}

std::vector<char> ClassEvaluation::hits() const {
    std::vector<char> out;
    out.reserve(matches.size());
    for (const auto& m : matches) {
        if (m.outcome == MatchOutcome::Ignored) continue;
        out.push_back(m.outcome == MatchOutcome::TruePositive ? 1 : 0);
    }
    return out;
}

namespace {

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

}  // namespace

std::optional<double> EvaluationReport::mean_ap(ApProtocol protocol) const {
    std::vector<std::optional<double>> v;
    for (const auto& c : classes) v.push_back(protocol == ApProtocol::AllPoints ? c.ap_all_points : c.ap_voc07);
    return mean_of(v);
}

std::optional<double> EvaluationReport::class_ap(int class_id, ApProtocol protocol) const {
    for (const auto& c : classes) {
        if (c.class_id == class_id) return protocol == ApProtocol::AllPoints ? c.ap_all_points : c.ap_voc07;
    }
    return std::nullopt;
}

EvaluationReport evaluate(std::span<const ScoredDetection> list, const GroundTruthIndex& gt,
                          double iou_threshold) {
    const int n_classes = gt.n_classes();
    std::vector<std::vector<std::size_t>> per_class(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& d = list[i].detection;
        if (list[i].suppressed) continue;
        if (d.class_id < 0 || d.class_id >= n_classes) throw DataError("detection class id out of range");
        per_class[static_cast<std::size_t>(d.class_id)].push_back(i);
    }

    EvaluationReport report;
    for (int c = 0; c < n_classes; ++c) {
        ClassEvaluation ce;
        ce.class_id = c;
        ce.n_positives = gt.positives(c);
        auto& ranked = per_class[static_cast<std::size_t>(c)];
        std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
            if (list[a].final_score != list[b].final_score) return list[a].final_score > list[b].final_score;
            const int cmp = list[a].detection.image_id.compare(list[b].detection.image_id);
            if (cmp != 0) return cmp < 0;
            return a < b;
        });
        ce.ranked = ranked;
        ce.matches.resize(ranked.size());

        // Matching is independent across images, so each image's slice is matched in rank order.
        std::map<std::string, std::vector<std::size_t>> positions_by_image;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            positions_by_image[list[ranked[r]].detection.image_id].push_back(r);
        }
        for (const auto& [image, positions] : positions_by_image) {
            std::vector<BoundingBox> boxes;
            boxes.reserve(positions.size());
            for (const auto r : positions) boxes.push_back(list[ranked[r]].detection.box);
            const auto objects = gt.objects(image, c);
            auto m = match(boxes, objects, iou_threshold);
            for (std::size_t k = 0; k < positions.size(); ++k) ce.matches[positions[k]] = m[k];
        }

        const auto h = ce.hits();
        ce.ap_voc07 = average_precision(h, ce.n_positives, ApProtocol::Voc07ElevenPoint);
        ce.ap_all_points = average_precision(h, ce.n_positives, ApProtocol::AllPoints);
        report.classes.push_back(std::move(ce));
    }
    return report;
}

std::size_t max_matching(std::span<const BoundingBox> dets, std::span<const GroundTruthObject> gts,
                         double iou_threshold, bool greedy) {
    std::vector<std::size_t> objects;
    for (std::size_t g = 0; g < gts.size(); ++g) {
        if (!gts[g].difficult) objects.push_back(g);
    }
    std::vector<std::vector<std::size_t>> adj(dets.size());
    std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        for (std::size_t k = 0; k < objects.size(); ++k) {
            const double o = iou(dets[d], gts[objects[k]].box);
            if (o > iou_threshold) {
                adj[d].push_back(k);
                edges.emplace_back(o, d, k);
            }
        }
    }

    if (greedy) {
        std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
            if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
            return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
        });
        std::vector<char> det_used(dets.size(), 0);
        std::vector<char> obj_used(objects.size(), 0);
        std::size_t n = 0;
        for (const auto& [o, d, k] : edges) {
            if (det_used[d] || obj_used[k]) continue;
            det_used[d] = obj_used[k] = 1;
            ++n;
        }
        return n;
    }

    // Kuhn's augmenting paths; groups are one image and one class, so sizes are small.
    std::vector<std::optional<std::size_t>> owner(objects.size());
    std::vector<char> visited;
    std::function<bool(std::size_t)> augment = [&](std::size_t d) {
        for (const auto k : adj[d]) {
            if (visited[k]) continue;
            visited[k] = 1;
            if (!owner[k] || augment(*owner[k])) {
                owner[k] = d;
                return true;
            }
        }
        return false;
    };
    std::size_t n = 0;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        visited.assign(objects.size(), 0);
        if (augment(d)) ++n;
    }
    return n;
}

std::optional<double> BoundReport::mean_ap(ApProtocol protocol) const {
    return mean_of(protocol == ApProtocol::AllPoints ? ap_all_points : ap_voc07);
}

BoundReport maximal_map(std::span<const ScoredDetection> list, const GroundTruthIndex& gt, bool greedy,
                        double iou_threshold) {
    const int n_classes = gt.n_classes();
    std::vector<std::map<std::string, std::vector<BoundingBox>>> groups(static_cast<std::size_t>(n_classes));
    std::vector<std::size_t> listed(static_cast<std::size_t>(n_classes), 0);
    for (const auto& s : list) {
        if (s.suppressed) continue;
        const auto c = static_cast<std::size_t>(s.detection.class_id);
        if (s.detection.class_id < 0 || s.detection.class_id >= n_classes) {
            throw DataError("detection class id out of range");
        }
        groups[c][s.detection.image_id].push_back(s.detection.box);
        ++listed[c];
    }

    BoundReport out;
    for (int c = 0; c < n_classes; ++c) {
        std::size_t matched = 0;
        for (const auto& [image, boxes] : groups[static_cast<std::size_t>(c)]) {
            matched += max_matching(boxes, gt.objects(image, c), iou_threshold, greedy);
        }
        // Ideal ranking: every matchable detection first, the remainder after.
        std::vector<char> hits(listed[static_cast<std::size_t>(c)], 0);
        std::fill(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(matched), 1);
        out.matchable.push_back(matched);
        out.ap_voc07.push_back(average_precision(hits, gt.positives(c), ApProtocol::Voc07ElevenPoint));
        out.ap_all_points.push_back(average_precision(hits, gt.positives(c), ApProtocol::AllPoints));
    }
    return out;
}

namespace {

const std::vector<std::pair<std::string, std::vector<std::string>>>& voc_groups() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> kGroups = {
        {"animal", {"bird", "cat", "cow", "dog", "horse", "sheep"}},
        {"furniture", {"chair", "diningtable", "sofa"}},
        {"vehicle", {"aeroplane", "bicycle", "boat", "bus", "car", "motorbike", "train"}},
        {"person", {"person"}},
    };
    return kGroups;
}

}  // namespace

SimilarityGroups SimilarityGroups::voc_default(const Roster& classes) {
    SimilarityGroups g;
    g.group_of_.assign(static_cast<std::size_t>(classes.size()), -1);
    for (const auto& [name, members] : voc_groups()) {
        int id = -1;
        for (const auto& m : members) {
            const auto c = classes.find(m);
            if (!c) continue;
            if (id < 0) {
                id = g.n_groups();
                g.names_.push_back(name);
            }
            g.group_of_[static_cast<std::size_t>(*c)] = id;
        }
    }
    for (int c = 0; c < classes.size(); ++c) {
        if (g.group_of_[static_cast<std::size_t>(c)] < 0) {
            g.group_of_[static_cast<std::size_t>(c)] = g.n_groups();
            g.names_.push_back(classes.name(c));
        }
    }
    return g;
}

SimilarityGroups SimilarityGroups::parse(const Roster& classes, const std::string& spec) {
    SimilarityGroups g;
    g.group_of_.assign(static_cast<std::size_t>(classes.size()), -1);
    for (const auto& entry : split(spec, ';')) {
        const std::string t = trim(entry);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw DataError("similarity group '" + t + "' lacks '='");
        const int id = g.n_groups();
        g.names_.push_back(trim(std::string_view(t).substr(0, eq)));
        for (const auto& member : split(std::string_view(t).substr(eq + 1), ',')) {
            const std::string m = trim(member);
            if (m.empty()) continue;
            const auto c = classes.find(m);
            if (!c) throw DataError("similarity groups name unknown class '" + m + "'");
            if (g.group_of_[static_cast<std::size_t>(*c)] >= 0) {
                throw DataError("class '" + m + "' appears in two similarity groups");
            }
            g.group_of_[static_cast<std::size_t>(*c)] = id;
        }
    }
    for (int c = 0; c < classes.size(); ++c) {
        if (g.group_of_[static_cast<std::size_t>(c)] < 0) {
            g.group_of_[static_cast<std::size_t>(c)] = g.n_groups();
            g.names_.push_back(classes.name(c));
        }
    }
    return g;
}

FpType classify_false_positive(const BoundingBox& box, int class_id, const DetectionMatch& match,
                               std::span<const GroundTruthObject> image_objects,
                               const SimilarityGroups& groups) {
    if (match.duplicate || match.max_overlap >= 0.1) return FpType::Loc;
    double similar = 0.0;
    double other = 0.0;
    for (const auto& o : image_objects) {
        if (o.class_id == class_id) continue;
        const double v = iou(box, o.box);
        if (groups.group(o.class_id) == groups.group(class_id)) similar = std::max(similar, v);
        else other = std::max(other, v);
    }
    if (similar >= 0.1) return FpType::Sim;
    if (other >= 0.1) return FpType::Oth;
    return FpType::Bg;
}

namespace {

std::vector<std::size_t> fp_buckets(std::size_t max_count) {
    std::vector<std::size_t> out;
    for (std::size_t base = 1; base <= max_count; base *= 10) {
        for (const std::size_t m : {1, 2, 5}) {
            if (base * m <= max_count) out.push_back(base * m);
        }
    }
    if (max_count > 0 && (out.empty() || out.back() != max_count)) out.push_back(max_count);
    return out;
}

}  // namespace

std::vector<FpTaxonomyRow> fp_taxonomy(std::span<const ScoredDetection> list, const GroundTruthIndex& gt,
                                       EvaluationReport& report, const Roster& classes,
                                       const SimilarityGroups& groups) {
    // Per class: FP types in rank order.
    std::vector<std::vector<FpType>> per_class(report.classes.size());
    std::size_t longest = 0;
    for (std::size_t ci = 0; ci < report.classes.size(); ++ci) {
        auto& ce = report.classes[ci];
        for (std::size_t r = 0; r < ce.ranked.size(); ++r) {
            auto& m = ce.matches[r];
            if (m.outcome != MatchOutcome::FalsePositive) continue;
            const auto& d = list[ce.ranked[r]].detection;
            m.fp_type = classify_false_positive(d.box, d.class_id, m, gt.image(d.image_id), groups);
            per_class[ci].push_back(*m.fp_type);
        }
        longest = std::max(longest, per_class[ci].size());
    }

    const auto buckets = fp_buckets(longest);
    std::vector<FpTaxonomyRow> rows;
    auto emit = [&](const std::string& scope, const std::vector<std::size_t>& members) {
        for (const auto k : buckets) {
            FpTaxonomyRow row;
            row.scope = scope;
            row.fp_count = k;
            std::array<std::size_t, kFpTypes> counts{};
            for (const auto ci : members) {
                const auto& types = per_class[ci];
                const std::size_t upto = std::min(k, types.size());
                for (std::size_t i = 0; i < upto; ++i) ++counts[static_cast<std::size_t>(types[i])];
                row.counted += upto;
            }
            if (row.counted == 0) continue;
            for (int t = 0; t < kFpTypes; ++t) {
                row.fraction[static_cast<std::size_t>(t)] =
                    static_cast<double>(counts[static_cast<std::size_t>(t)]) / static_cast<double>(row.counted);
            }
            rows.push_back(row);
        }
    };

    std::vector<std::size_t> all;
    for (std::size_t ci = 0; ci < report.classes.size(); ++ci) {
        emit(classes.name(report.classes[ci].class_id), {ci});
        all.push_back(ci);
    }
    for (int g = 0; g < groups.n_groups(); ++g) {
        std::vector<std::size_t> members;
        for (std::size_t ci = 0; ci < report.classes.size(); ++ci) {
            if (groups.group(report.classes[ci].class_id) == g) members.push_back(ci);
        }
        emit("group:" + groups.group_name(g), members);
    }
    emit("all", all);
    return rows;
}

std::vector<double> feature_importance(std::span<const RankerModel> models) {
    if (models.empty()) throw DataError("feature importance needs at least one model");
    const std::size_t dim = models.front().dim();
    std::vector<double> out(dim, 0.0);
    for (const auto& m : models) {
        if (m.dim() != dim) throw DataError("feature importance: models disagree on feature dimension");
        for (std::size_t k = 0; k < dim; ++k) out[k] += std::abs(m.weights[k]);
    }
    for (auto& v : out) v /= static_cast<double>(models.size());
    return out;
}

}  // namespace detfuse
