#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace detfuse {

// PoW1 = hinge, PoW2 = logistic, PoW3 = squared epsilon-insensitive, PaW1 = pairwise hinge.
enum class LossTag { Hinge, Logistic, SquaredEpsInsensitive, PairwiseHinge };

std::string_view loss_tag_name(LossTag tag);
// Accepts canonical names and the learner aliases pow1, pow2, pow3, paw1.
LossTag parse_loss_tag(std::string_view name);
bool is_classification(LossTag tag);

inline constexpr double kEpsilonTube = 0.1;
inline constexpr double kPairMargin = 0.1;
inline constexpr double kPositiveOverlap = 0.5;

// Row-major dense matrix.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    explicit FeatureMatrix(std::size_t cols) : cols_(cols) {}

    std::size_t rows() const { return cols_ ? data_.size() / cols_ : 0; }
    std::size_t cols() const { return cols_; }
    void push_row(std::span<const double> row);
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

private:
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct TrainingSet {
    FeatureMatrix features;
    std::vector<double> overlaps;  // ground-truth overlap ratio per row, in [0, 1]
};

// Per-dimension z-scoring with statistics taken from the training rows only.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer identity(std::size_t dim);
    static Standardizer fit(const FeatureMatrix& x);
    std::vector<double> apply(std::span<const double> x) const;
};

struct TrainingDiagnostics {
    double final_objective = 0.0;
    int iterations = 0;
    bool converged = false;
    // Objective minimized by the optimizer after each iteration: the primal for
    // Newton-solved losses, the dual for hinge losses solved by coordinate descent.
    std::vector<double> objective_trace;
};

struct RankerModel {
    int class_id = -1;  // -1 marks a model pooled over all classes
    LossTag loss = LossTag::Logistic;
    double C = 1.0;
    std::vector<double> weights;  // in standardized feature space
    double bias = 0.0;
    Standardizer standardizer;
    TrainingDiagnostics diagnostics;

    std::size_t dim() const { return weights.size(); }
};

// g(x) = w . standardize(x) + bias. Throws DataError on dimension mismatch.
double score(const RankerModel& model, std::span<const double> x);

struct OptimizerOptions {
    double relative_tolerance = 1e-6;
    int max_iterations = 1000;
    // When set, start from a random point drawn with this seed instead of the origin.
    std::optional<std::uint64_t> random_start;
};

// Throws DataError for single-class sets (classification losses), non-finite features,
// or C <= 0.
RankerModel train_pointwise(const TrainingSet& set, LossTag loss, double C,
                            const OptimizerOptions& options = {});

struct PairPolicy {
    double margin = kPairMargin;      // pair (a, b) requires y_a - y_b > margin
    std::size_t max_pairs = 100000;   // per class
    std::uint64_t seed = 0;
};

// RankSVM on difference vectors. Rows are put in canonical order first, so the model
// does not depend on input row order. Throws DataError when no pair qualifies.
RankerModel train_pairwise(const TrainingSet& set, double C, const PairPolicy& policy = {},
                           const OptimizerOptions& options = {});

// Pairs (a, b), indices into `overlaps`, that train_pairwise would use after
// canonical ordering has been applied by the caller.
std::vector<std::pair<std::size_t, std::size_t>> generate_pairs(std::span<const double> overlaps,
                                                                const PairPolicy& policy);

// Linear problem in the optimizer's own coordinates: rows already standardized and, for
// pointwise losses, augmented with a trailing constant 1 so the bias is the last weight.
// Targets are +-1 for hinge/logistic, overlaps for the regression loss, +1 for pairs.
struct LossBatch {
    FeatureMatrix rows;
    std::vector<double> targets;
};

// 0.5 w'w + C * sum(loss).
double objective(LossTag loss, std::span<const double> w, const LossBatch& batch, double C);
// Gradient (a subgradient at hinge kinks).
std::vector<double> gradient(LossTag loss, std::span<const double> w, const LossBatch& batch,
                             double C);
// Largest normalized deviation ||g_analytic - g_fd||_inf / max(||g_analytic||_inf, ||g_fd||_inf)
// against central finite differences with step h.
double gradient_check(LossTag loss, std::span<const double> w, const LossBatch& batch, double C,
                      double h = 1e-5);

// Line-oriented text model file holding one or more class models plus free-form metadata
// (rosters, feature options). Reals are written in round-trip precision so reload is
// bit-exact.
struct ModelFile {
    std::map<std::string, std::string> metadata;
    std::vector<RankerModel> models;
};

std::string format_model_file(const ModelFile& file, const std::vector<std::string>& class_names);
ModelFile parse_model_file(const std::string& text, const std::vector<std::string>& class_names,
                           const std::string& origin = "<memory>");

}  // namespace detfuse
