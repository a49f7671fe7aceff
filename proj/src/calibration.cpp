#include "calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "error.hpp"
#include "kvfile.hpp"

namespace detfuse {

double apply_platt(const PlattParams& p, double x) {
    const double t = x * p.alpha + p.beta;
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

namespace {

struct Targets {
    double positive;
    double negative;
};

Targets prior_targets(std::span<const LabeledScore> data) {
    double n_pos = 0.0;
    double n_neg = 0.0;
    for (const auto& d : data) (d.positive ? n_pos : n_neg) += 1.0;
    return {(n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)};
}

// log(1 + exp(f)) - (1 - t) f, evaluated without overflow.
double cross_entropy(double f, double t) {
    if (f >= 0.0) return t * f + std::log1p(std::exp(-f));
    return (t - 1.0) * f + std::log1p(std::exp(f));
}

struct Evaluation {
    double value = 0.0;
    double g_alpha = 0.0;
    double g_beta = 0.0;
    double h_aa = 0.0;
    double h_ab = 0.0;
    double h_bb = 0.0;
};

Evaluation evaluate_platt(const PlattParams& p, std::span<const LabeledScore> data, const Targets& tg) {
    Evaluation ev;
    for (const auto& d : data) {
        const double t = d.positive ? tg.positive : tg.negative;
        const double f = d.score * p.alpha + p.beta;
        const double prob = apply_platt(p, d.score);
        ev.value += cross_entropy(f, t);
        const double r = t - prob;
        ev.g_alpha += d.score * r;
        ev.g_beta += r;
        const double w = prob * (1.0 - prob);
        ev.h_aa += d.score * d.score * w;
        ev.h_ab += d.score * w;
        ev.h_bb += w;
    }
    return ev;
}

std::vector<LabeledScore> canonical(std::span<const LabeledScore> data) {
    std::vector<LabeledScore> v(data.begin(), data.end());
    std::sort(v.begin(), v.end(), [](const LabeledScore& a, const LabeledScore& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.positive < b.positive;
    });
    return v;
}

}  // namespace

double platt_objective(const PlattParams& p, std::span<const LabeledScore> data) {
    return evaluate_platt(p, data, prior_targets(data)).value;
}

std::pair<double, double> platt_gradient(const PlattParams& p, std::span<const LabeledScore> data) {
    const auto ev = evaluate_platt(p, data, prior_targets(data));
    return {ev.g_alpha, ev.g_beta};
}

PlattFit fit_platt_detailed(std::span<const LabeledScore> input) {
    const auto data = canonical(input);
    std::size_t n_pos = 0;
    for (const auto& d : data) n_pos += d.positive ? 1 : 0;
    const std::size_t n_neg = data.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("degenerate calibration set");
    for (const auto& d : data) {
        if (!std::isfinite(d.score)) throw DataError("non-finite score in calibration set");
    }

    constexpr int kMaxIterations = 200;
    constexpr double kRelativeTolerance = 1e-8;
    constexpr double kRidge = 1e-12;
    constexpr double kMinStep = 1e-10;

    const Targets tg = prior_targets(data);
    PlattFit fit;
    fit.params = {0.0, std::log((static_cast<double>(n_neg) + 1.0) / (static_cast<double>(n_pos) + 1.0))};
    Evaluation ev = evaluate_platt(fit.params, data, tg);

    for (int it = 0; it < kMaxIterations; ++it) {
        fit.iterations = it + 1;
        const double a = ev.h_aa + kRidge;
        const double b = ev.h_ab;
        const double d = ev.h_bb + kRidge;
        const double det = a * d - b * b;
        if (!(det > 0.0) || !std::isfinite(det)) throw NumericError("singular Hessian in sigmoid fit");
        // Newton direction solves H dir = -g.
        const double d_alpha = -(d * ev.g_alpha - b * ev.g_beta) / det;
        const double d_beta = -(-b * ev.g_alpha + a * ev.g_beta) / det;
        const double slope = ev.g_alpha * d_alpha + ev.g_beta * d_beta;

        double step = 1.0;
        bool moved = false;
        Evaluation next;
        PlattParams trial;
        while (step >= kMinStep) {
            trial = {fit.params.alpha + step * d_alpha, fit.params.beta + step * d_beta};
            next = evaluate_platt(trial, data, tg);
            if (next.value <= ev.value + 1e-4 * step * slope) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;

        const double change = ev.value - next.value;
        fit.params = trial;
        const double previous = ev.value;
        ev = next;
        if (change <= kRelativeTolerance * std::abs(previous)) break;
    }
    if (!std::isfinite(fit.params.alpha) || !std::isfinite(fit.params.beta)) {
        throw NumericError("sigmoid fit diverged");
    }
    fit.objective = ev.value;
    return fit;
}

PlattParams fit_platt(std::span<const LabeledScore> data) { return fit_platt_detailed(data).params; }

void CalibrationTable::set(int detector_id, int class_id, PlattParams p) {
    entries_[{detector_id, class_id}] = p;
}

std::optional<PlattParams> CalibrationTable::find(int detector_id, int class_id) const {
    const auto it = entries_.find({detector_id, class_id});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string CalibrationTable::format(const Roster& detectors, const Roster& classes) const {
    std::string out;
    for (const auto& [key, p] : entries_) {
        out += detectors.name(key.first) + '\t' + classes.name(key.second) + '\t' + format_exact(p.alpha) + '\t' +
               format_exact(p.beta) + '\n';
    }
    return out;
}

CalibrationTable CalibrationTable::parse(const std::string& text, const Roster& detectors,
                                         const Roster& classes, const std::string& origin) {
    CalibrationTable table;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto f = split(line, '\t');
        if (f.size() != 4) throw DataError(where + ": expected 4 tab-separated fields");
        try {
            table.set(detectors.id(f[0]), classes.id(f[1]),
                      {parse_double(f[2], "alpha"), parse_double(f[3], "beta")});
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return table;
}

std::vector<std::optional<bool>> detector_match_labels(const DetectionCorpus& corpus,
                                                       const GroundTruthIndex& gt) {
    std::vector<std::optional<bool>> labels(corpus.size());
    for (int j = 0; j < corpus.detectors().size(); ++j) {
        std::vector<ScoredDetection> list;
        std::vector<std::size_t> source;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (corpus[i].detector_id != j) continue;
            list.push_back({corpus[i], corpus[i].raw_score, false});
            source.push_back(i);
        }
        const auto report = evaluate(list, gt);
        for (const auto& ce : report.classes) {
            for (std::size_t r = 0; r < ce.ranked.size(); ++r) {
                const auto& m = ce.matches[r];
                if (m.outcome == MatchOutcome::Ignored) continue;
                labels[source[ce.ranked[r]]] = m.outcome == MatchOutcome::TruePositive;
            }
        }
    }
    return labels;
}

CalibrationTable fit_calibration_table(std::span<const DetectionCorpus* const> corpora,
                                       std::span<const GroundTruthIndex* const> truths, bool pooled) {
    if (corpora.size() != truths.size() || corpora.empty()) {
        throw UsageError("calibration needs one ground-truth set per corpus");
    }
    const Roster& detectors = corpora.front()->detectors();
    const Roster& classes = corpora.front()->classes();
    const auto n_det = static_cast<std::size_t>(detectors.size());
    const auto n_cls = static_cast<std::size_t>(classes.size());

    std::vector<std::vector<std::vector<LabeledScore>>> data(n_det, std::vector<std::vector<LabeledScore>>(n_cls));
    for (std::size_t k = 0; k < corpora.size(); ++k) {
        const auto& corpus = *corpora[k];
        if (corpus.detectors().names() != detectors.names() || corpus.classes().names() != classes.names()) {
            throw DataError("calibration corpora disagree on rosters");
        }
        const auto labels = detector_match_labels(corpus, *truths[k]);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (!labels[i]) continue;
            data[static_cast<std::size_t>(corpus[i].detector_id)][static_cast<std::size_t>(corpus[i].class_id)]
                .push_back({corpus[i].raw_score, *labels[i]});
        }
    }

    CalibrationTable table;
    for (std::size_t j = 0; j < n_det; ++j) {
        std::vector<LabeledScore> all;
        for (const auto& v : data[j]) all.insert(all.end(), v.begin(), v.end());
        if (all.empty()) continue;

        std::optional<PlattParams> pooled_fit;
        auto get_pooled = [&]() {
            if (!pooled_fit) {
                try {
                    pooled_fit = fit_platt(all);
                } catch (const DataError&) {
                    throw DataError("degenerate calibration set for detector '" + detectors.name(static_cast<int>(j)) +
                                    "'");
                }
            }
            return *pooled_fit;
        };

        for (std::size_t c = 0; c < n_cls; ++c) {
            const auto& v = data[j][c];
            bool has_pos = false;
            bool has_neg = false;
            for (const auto& d : v) (d.positive ? has_pos : has_neg) = true;
            PlattParams p = (!pooled && has_pos && has_neg) ? fit_platt(v) : get_pooled();
            table.set(static_cast<int>(j), static_cast<int>(c), p);
        }
    }
    return table;
}

void apply_calibration(DetectionCorpus& corpus, const CalibrationTable& table) {
    constexpr double kLow = std::numeric_limits<double>::min();
    const double high = std::nextafter(1.0, 0.0);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& d = corpus[i];
        const auto p = table.find(d.detector_id, d.class_id);
        if (!p) {
            throw DataError("missing calibration for detector '" + corpus.detectors().name(d.detector_id) +
                            "', class '" + corpus.classes().name(d.class_id) + "'");
        }
        corpus.set_calibrated(i, std::clamp(apply_platt(*p, d.raw_score), kLow, high));
    }
}

}  // namespace detfuse
