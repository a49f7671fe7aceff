#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "corpus_io.hpp"
#include "geometry.hpp"

namespace detfuse {

inline constexpr int kSaliencyDims = 4;

struct FeatureOptions {
    int n_neighbors = 10;
    bool use_calibrated = true;  // score S inside relative scores and class context
    bool feature_map = false;    // additive chi-squared map, 3 outputs per input
    bool use_rs = true;
    bool use_os = true;
    bool use_so = true;
};

// Block layout for n detectors and C classes.
struct FeatureLayout {
    int n_detectors = 0;
    int n_classes = 0;

    int rs_dims() const;  // n + n + n(n-1)/2 + 1
    int os_dims() const { return kSaliencyDims; }
    int so_dims() const { return n_classes; }
    int base_dims() const { return rs_dims() + os_dims() + so_dims(); }
};

// Output dimension after block selection and optional mapping.
std::size_t feature_dimension(const FeatureLayout& layout, const FeatureOptions& options);
// Human-readable names for every output dimension.
std::vector<std::string> feature_names(const Roster& detectors, const Roster& classes,
                                       const FeatureOptions& options);

// R_j = gamma_j * S(partner_j) for every detector j; `dets` is one image and class.
std::vector<double> relative_scores(std::span<const Detection> dets, std::size_t self, int n_detectors,
                                    bool use_calibrated);

// [I_D | R | pairwise sums R_a + R_b (a < b, lexicographic) | total].
std::vector<double> assemble_rs(int detector_id, std::span<const double> relative);

// Mean of the n_neighbors largest IoUs with each of OBJ, CORE, EES proposals (missing
// neighbours count as zero), then the confidence of the best-overlapping EES proposal.
std::vector<double> object_saliency(const BoundingBox& box, const ImageProposals& proposals,
                                    int n_neighbors);

// So(c) = sum over detectors of the top class-c score that detector produced in the image.
std::vector<double> object_object_context(std::span<const Detection> image_dets, int n_detectors,
                                          int n_classes, bool use_calibrated);

// Order-1 additive chi-squared feature map (uniform window, period 2*pi/L with
// L = 2*pi / (5.86 + 3.65)). Throws DataError on negative components.
std::vector<double> feature_map(std::span<const double> v);

// Features for every detection of `corpus`, one row per detection in corpus order.
struct FeatureTable {
    std::size_t dim = 0;
    std::vector<double> values;  // row-major, corpus.size() rows

    std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

FeatureTable compute_features(const DetectionCorpus& corpus, const ProposalSet& proposals,
                              const FeatureOptions& options);

// Lines: image_id, detection index, then the feature values (six decimals).
std::string format_feature_dump(const DetectionCorpus& corpus, const FeatureTable& table);
// Reads a dump back, checking image ids and indices against the corpus.
FeatureTable parse_feature_dump(const std::string& text, const DetectionCorpus& corpus, std::size_t dim,
                                const std::string& origin = "<memory>");

}  // namespace detfuse
