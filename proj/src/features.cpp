#include "features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "error.hpp"
#include "kvfile.hpp"

namespace detfuse {

int FeatureLayout::rs_dims() const {
    const int n = n_detectors;
    return n + n + n * (n - 1) / 2 + 1;
}

std::size_t feature_dimension(const FeatureLayout& layout, const FeatureOptions& options) {
    std::size_t d = 0;
    if (options.use_rs) d += static_cast<std::size_t>(layout.rs_dims());
    if (options.use_os) d += static_cast<std::size_t>(layout.os_dims());
    if (options.use_so) d += static_cast<std::size_t>(layout.so_dims());
    return options.feature_map ? 3 * d : d;
}

std::vector<std::string> feature_names(const Roster& detectors, const Roster& classes,
                                       const FeatureOptions& options) {
    std::vector<std::string> base;
    const int n = detectors.size();
    if (options.use_rs) {
        for (int j = 0; j < n; ++j) base.push_back("I_D[" + detectors.name(j) + "]");
        for (int j = 0; j < n; ++j) base.push_back("R[" + detectors.name(j) + "]");
        for (int a = 0; a < n; ++a) {
            for (int b = a + 1; b < n; ++b) base.push_back("R[" + detectors.name(a) + "+" + detectors.name(b) + "]");
        }
        base.push_back("R[sum]");
    }
    if (options.use_os) {
        for (const char* s : {"Os[OBJ]", "Os[CORE]", "Os[EES]", "Os[EES-confidence]"}) base.emplace_back(s);
    }
    if (options.use_so) {
        for (int c = 0; c < classes.size(); ++c) base.push_back("So[" + classes.name(c) + "]");
    }
    if (!options.feature_map) return base;
    std::vector<std::string> mapped;
    for (const auto& b : base) {
        mapped.push_back(b + "#0");
        mapped.push_back(b + "#cos");
        mapped.push_back(b + "#sin");
    }
    return mapped;
}

std::vector<double> relative_scores(std::span<const Detection> dets, std::size_t self, int n_detectors,
                                    bool use_calibrated) {
    const auto corr = correspondences(dets, self, n_detectors);
    std::vector<double> r(static_cast<std::size_t>(n_detectors), 0.0);
    for (std::size_t j = 0; j < r.size(); ++j) {
        const auto& slot = corr.slots[j];
        if (slot.partner) r[j] = slot.gamma * dets[*slot.partner].score(use_calibrated);
    }
    return r;
}

std::vector<double> assemble_rs(int detector_id, std::span<const double> relative) {
    const auto n = relative.size();
    std::vector<double> out;
    out.reserve(2 * n + n * (n - 1) / 2 + 1);
    for (std::size_t j = 0; j < n; ++j) out.push_back(static_cast<int>(j) == detector_id ? 1.0 : 0.0);
    double total = 0.0;
    for (const double v : relative) {
        out.push_back(v);
        total += v;
    }
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) out.push_back(relative[a] + relative[b]);
    }
    out.push_back(total);
    return out;
}

std::vector<double> object_saliency(const BoundingBox& box, const ImageProposals& proposals, int n_neighbors) {
    if (n_neighbors < 1) throw UsageError("n_neighbors must be at least 1");
    std::vector<double> out(kSaliencyDims, 0.0);
    std::vector<double> overlaps;
    for (int s = 0; s < kProposalSources; ++s) {
        const auto& list = proposals.by_source[static_cast<std::size_t>(s)];
        overlaps.clear();
        for (const auto& p : list) overlaps.push_back(iou(box, p.box));
        const auto k = std::min<std::size_t>(overlaps.size(), static_cast<std::size_t>(n_neighbors));
        std::partial_sort(overlaps.begin(), overlaps.begin() + static_cast<std::ptrdiff_t>(k), overlaps.end(),
                          std::greater<>());
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += overlaps[i];
        out[static_cast<std::size_t>(s)] = sum / static_cast<double>(n_neighbors);
    }
    double best = 0.0;
    for (const auto& p : proposals.by_source[static_cast<std::size_t>(ProposalSource::Ees)]) {
        const double o = iou(box, p.box);
        if (o > best) {
            best = o;
            out[3] = p.confidence.value_or(0.0);
        }
    }
    return out;
}

std::vector<double> object_object_context(std::span<const Detection> image_dets, int n_detectors, int n_classes,
                                          bool use_calibrated) {
    const auto n_det = static_cast<std::size_t>(n_detectors);
    std::vector<double> best(n_det * static_cast<std::size_t>(n_classes), 0.0);
    std::vector<char> seen(best.size(), 0);
    for (const auto& d : image_dets) {
        if (d.class_id < 0 || d.class_id >= n_classes || d.detector_id < 0 || d.detector_id >= n_detectors) {
            throw DataError("detection outside roster in class context");
        }
        const std::size_t k = static_cast<std::size_t>(d.class_id) * n_det + static_cast<std::size_t>(d.detector_id);
        const double s = d.score(use_calibrated);
        if (!seen[k] || s > best[k]) {
            best[k] = s;
            seen[k] = 1;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(n_classes), 0.0);
    for (std::size_t c = 0; c < out.size(); ++c) {
        for (std::size_t j = 0; j < n_det; ++j) out[c] += best[c * n_det + j];
    }
    return out;
}

std::vector<double> feature_map(std::span<const double> v) {
    const double period = 5.86 * std::sqrt(1.0) + 3.65;
    const double L = 2.0 * std::numbers::pi / period;
    // chi-squared spectrum: kappa(lambda) = sech(pi * lambda).
    const double kappa0 = 1.0;
    const double kappa1 = 1.0 / std::cosh(std::numbers::pi * L);
    std::vector<double> out;
    out.reserve(3 * v.size());
    for (const double x : v) {
        if (x < 0.0 || !std::isfinite(x)) throw DataError("feature map requires finite non-negative inputs");
        if (x == 0.0) {
            out.insert(out.end(), {0.0, 0.0, 0.0});
            continue;
        }
        const double lx = std::log(x);
        const double a = std::sqrt(2.0 * x * L * kappa1);
        out.push_back(std::sqrt(x * L * kappa0));
        out.push_back(a * std::cos(L * lx));
        out.push_back(a * std::sin(L * lx));
    }
    return out;
}

FeatureTable compute_features(const DetectionCorpus& corpus, const ProposalSet& proposals,
                              const FeatureOptions& options) {
    const FeatureLayout layout{corpus.detectors().size(), corpus.classes().size()};
    const int n = layout.n_detectors;
    FeatureTable table;
    table.dim = feature_dimension(layout, options);
    table.values.assign(corpus.size() * table.dim, 0.0);

    std::vector<Detection> image_dets;
    std::vector<Detection> class_dets;
    std::vector<std::size_t> class_index;
    std::vector<double> base;
    for (const auto& group : corpus.images()) {
        image_dets.clear();
        for (const auto i : group.indices) image_dets.push_back(corpus[i]);
        const auto so = object_object_context(image_dets, n, layout.n_classes, options.use_calibrated);
        const auto& props = proposals.image(group.image_id);

        for (int c = 0; c < layout.n_classes; ++c) {
            class_dets.clear();
            class_index.clear();
            for (const auto i : group.indices) {
                if (corpus[i].class_id == c) {
                    class_dets.push_back(corpus[i]);
                    class_index.push_back(i);
                }
            }
            for (std::size_t k = 0; k < class_dets.size(); ++k) {
                base.clear();
                if (options.use_rs) {
                    const auto r = relative_scores(class_dets, k, n, options.use_calibrated);
                    const auto rs = assemble_rs(class_dets[k].detector_id, r);
                    base.insert(base.end(), rs.begin(), rs.end());
                }
                if (options.use_os) {
                    const auto os = object_saliency(class_dets[k].box, props, options.n_neighbors);
                    base.insert(base.end(), os.begin(), os.end());
                }
                if (options.use_so) base.insert(base.end(), so.begin(), so.end());
                const auto row = options.feature_map ? feature_map(base) : base;
                std::copy(row.begin(), row.end(),
                          table.values.begin() + static_cast<std::ptrdiff_t>(class_index[k] * table.dim));
            }
        }
    }
    return table;
}

std::string format_feature_dump(const DetectionCorpus& corpus, const FeatureTable& table) {
    std::string out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        out += corpus[i].image_id + '\t' + std::to_string(i);
        for (const double v : table.row(i)) out += '\t' + format_fixed6(v);
        out += '\n';
    }
    return out;
}

FeatureTable parse_feature_dump(const std::string& text, const DetectionCorpus& corpus, std::size_t dim,
                                const std::string& origin) {
    FeatureTable table;
    table.dim = dim;
    table.values.reserve(corpus.size() * dim);
    std::size_t row = 0;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto f = split(line, '\t');
        if (f.size() != dim + 2) {
            throw DataError(where + ": expected " + std::to_string(dim + 2) + " fields, got " + std::to_string(f.size()));
        }
        if (row >= corpus.size() || f[0] != corpus[row].image_id || parse_int(f[1], where) != static_cast<long>(row)) {
            throw DataError(where + ": feature row does not match detection " + std::to_string(row));
        }
        for (std::size_t k = 0; k < dim; ++k) table.values.push_back(parse_double(f[k + 2], where));
        ++row;
    }
    if (row != corpus.size()) {
        throw DataError(origin + ": " + std::to_string(row) + " feature rows for " + std::to_string(corpus.size()) +
                        " detections");
    }
    return table;
}

}  // namespace detfuse
