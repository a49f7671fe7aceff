#include "rankers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "error.hpp"
#include "kvfile.hpp"
#include "random.hpp"

namespace detfuse {

std::string_view loss_tag_name(LossTag tag) {
    switch (tag) {
        case LossTag::Hinge: return "hinge";
        case LossTag::Logistic: return "logistic";
        case LossTag::SquaredEpsInsensitive: return "sq-eps-insensitive";
        case LossTag::PairwiseHinge: return "pairwise-hinge";
    }
    return "?";
}

LossTag parse_loss_tag(std::string_view name) {
    if (name == "hinge" || name == "pow1") return LossTag::Hinge;
    if (name == "logistic" || name == "pow2") return LossTag::Logistic;
    if (name == "sq-eps-insensitive" || name == "pow3") return LossTag::SquaredEpsInsensitive;
    if (name == "pairwise-hinge" || name == "paw1") return LossTag::PairwiseHinge;
    throw UsageError("unknown learner '" + std::string(name) + "' (expected pow1, pow2, pow3 or paw1)");
}

bool is_classification(LossTag tag) { return tag == LossTag::Hinge || tag == LossTag::Logistic; }

void FeatureMatrix::push_row(std::span<const double> row) {
    if (row.size() != cols_) throw DataError("feature row has wrong dimension");
    data_.insert(data_.end(), row.begin(), row.end());
}

Standardizer Standardizer::identity(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

Standardizer Standardizer::fit(const FeatureMatrix& x) {
    const std::size_t d = x.cols();
    const std::size_t n = x.rows();
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    if (n == 0) return s;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = x.row(i);
        for (std::size_t k = 0; k < d; ++k) s.mean[k] += r[k];
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = x.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            const double c = r[k] - s.mean[k];
            var[k] += c * c;
        }
    }
    for (std::size_t k = 0; k < d; ++k) {
        const double sd = std::sqrt(var[k] / static_cast<double>(n));
        s.scale[k] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
    return out;
}

double score(const RankerModel& model, std::span<const double> x) {
    if (x.size() != model.weights.size() || model.standardizer.mean.size() != x.size()) {
        throw DataError("ranker expects " + std::to_string(model.weights.size()) + " features, got " +
                        std::to_string(x.size()));
    }
    double g = model.bias;
    for (std::size_t k = 0; k < x.size(); ++k) {
        g += model.weights[k] * ((x[k] - model.standardizer.mean[k]) / model.standardizer.scale[k]);
    }
    return g;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

double loss_value(LossTag loss, double m, double y) {
    switch (loss) {
        case LossTag::Hinge:
        case LossTag::PairwiseHinge: return std::max(0.0, 1.0 - y * m);
        case LossTag::Logistic: return softplus(-y * m);
        case LossTag::SquaredEpsInsensitive: {
            const double a = std::abs(m - y) - kEpsilonTube;
            return a > 0.0 ? a * a : 0.0;
        }
    }
    return 0.0;
}

// d loss / d margin.
double loss_slope(LossTag loss, double m, double y) {
    switch (loss) {
        case LossTag::Hinge:
        case LossTag::PairwiseHinge: return y * m < 1.0 ? -y : 0.0;
        case LossTag::Logistic: return -y * sigmoid(-y * m);
        case LossTag::SquaredEpsInsensitive: {
            const double r = m - y;
            const double a = std::abs(r) - kEpsilonTube;
            return a > 0.0 ? 2.0 * a * (r > 0.0 ? 1.0 : -1.0) : 0.0;
        }
    }
    return 0.0;
}

// (Generalized) second derivative with respect to the margin.
double loss_curvature(LossTag loss, double m, double y) {
    switch (loss) {
        case LossTag::Logistic: {
            const double s = sigmoid(y * m);
            return s * (1.0 - s);
        }
        case LossTag::SquaredEpsInsensitive: return std::abs(m - y) - kEpsilonTube > 0.0 ? 2.0 : 0.0;
        default: return 0.0;
    }
}

struct Canonical {
    FeatureMatrix x;
    std::vector<double> y;
};

void validate(const TrainingSet& set) {
    if (set.features.rows() != set.overlaps.size()) {
        throw DataError("training set has " + std::to_string(set.features.rows()) + " rows but " +
                        std::to_string(set.overlaps.size()) + " labels");
    }
    if (set.features.rows() == 0) throw DataError("empty training set");
    for (std::size_t i = 0; i < set.features.rows(); ++i) {
        for (const double v : set.features.row(i)) {
            if (!std::isfinite(v)) throw DataError("non-finite feature value in training set");
        }
        const double y = set.overlaps[i];
        if (!(y >= 0.0 && y <= 1.0)) throw DataError("overlap label outside [0, 1]");
    }
}

// Sort rows by (label, features) so that training is independent of row order.
Canonical canonicalize(const TrainingSet& set) {
    std::vector<std::size_t> order(set.overlaps.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (set.overlaps[a] != set.overlaps[b]) return set.overlaps[a] < set.overlaps[b];
        const auto ra = set.features.row(a);
        const auto rb = set.features.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    Canonical c{FeatureMatrix(set.features.cols()), {}};
    c.y.reserve(order.size());
    for (const auto i : order) {
        c.x.push_row(set.features.row(i));
        c.y.push_back(set.overlaps[i]);
    }
    return c;
}

std::vector<double> margins(std::span<const double> w, const LossBatch& batch) {
    std::vector<double> m(batch.rows.rows());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = dot(w, batch.rows.row(i));
    return m;
}

double objective_from_margins(LossTag loss, std::span<const double> w, const LossBatch& batch,
                              std::span<const double> m, double C) {
    double data = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) data += loss_value(loss, m[i], batch.targets[i]);
    return 0.5 * dot(w, w) + C * data;
}

std::vector<double> random_point(std::size_t dim, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x5EED));
    std::vector<double> w(dim);
    for (auto& v : w) v = rng.normal();
    return w;
}

// Truncated Newton with conjugate gradients and Armijo backtracking. Every accepted step
// strictly lowers the objective.
TrainingDiagnostics newton_solve(LossTag loss, const LossBatch& batch, double C, std::vector<double>& w,
                                 const OptimizerOptions& opt) {
    TrainingDiagnostics diag;
    const std::size_t d = w.size();
    const std::size_t n = batch.rows.rows();
    auto m = margins(w, batch);
    double f = objective_from_margins(loss, w, batch, m, C);
    diag.objective_trace.push_back(f);

    std::vector<double> g(d), curvature(n), s(d), r(d), p(d), hp(d), trial(d);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        diag.iterations = it;
        g = w;
        for (std::size_t i = 0; i < n; ++i) {
            axpy(C * loss_slope(loss, m[i], batch.targets[i]), batch.rows.row(i), g);
            curvature[i] = loss_curvature(loss, m[i], batch.targets[i]);
        }
        const double gnorm = std::sqrt(dot(g, g));
        if (gnorm <= 1e-12) {
            diag.converged = true;
            break;
        }

        // Solve (I + C Z' D Z) s = -g.
        std::fill(s.begin(), s.end(), 0.0);
        for (std::size_t k = 0; k < d; ++k) r[k] = -g[k];
        p = r;
        double rr = dot(r, r);
        const double cg_tol = std::min(0.1, std::sqrt(gnorm)) * gnorm;
        for (std::size_t cg = 0; cg < 2 * d + 20 && std::sqrt(rr) > cg_tol; ++cg) {
            hp = p;
            for (std::size_t i = 0; i < n; ++i) {
                if (curvature[i] == 0.0) continue;
                const auto z = batch.rows.row(i);
                axpy(C * curvature[i] * dot(z, p), z, hp);
            }
            const double php = dot(p, hp);
            if (!(php > 0.0)) break;
            const double a = rr / php;
            axpy(a, p, s);
            axpy(-a, hp, r);
            const double rr_next = dot(r, r);
            const double beta = rr_next / rr;
            rr = rr_next;
            for (std::size_t k = 0; k < d; ++k) p[k] = r[k] + beta * p[k];
        }

        const double slope = dot(g, s);
        if (!(slope < 0.0)) {
            diag.converged = true;
            break;
        }
        double step = 1.0;
        bool moved = false;
        double f_new = f;
        std::vector<double> m_new;
        for (int ls = 0; ls < 40; ++ls) {
            for (std::size_t k = 0; k < d; ++k) trial[k] = w[k] + step * s[k];
            m_new = margins(trial, batch);
            f_new = objective_from_margins(loss, trial, batch, m_new, C);
            if (f_new <= f + 1e-4 * step * slope && f_new < f) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            diag.converged = true;
            break;
        }
        const double change = f - f_new;
        const double previous = f;
        w = trial;
        m = std::move(m_new);
        f = f_new;
        diag.objective_trace.push_back(f);
        if (!std::isfinite(f)) throw NumericError("ranker objective became non-finite");
        if (change <= opt.relative_tolerance * std::max(std::abs(previous), 1e-300)) {
            diag.converged = true;
            break;
        }
    }
    diag.final_objective = f;
    return diag;
}

// Dual coordinate descent for L1-loss (hinge) SVMs. The trace records the dual objective
// 0.5 |w|^2 - sum(alpha), which each coordinate step cannot increase.
TrainingDiagnostics dual_cd_solve(const LossBatch& batch, double C, std::vector<double>& w,
                                  const OptimizerOptions& opt) {
    TrainingDiagnostics diag;
    const std::size_t n = batch.rows.rows();
    const std::size_t d = w.size();
    std::vector<double> alpha(n, 0.0);
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = dot(batch.rows.row(i), batch.rows.row(i));

    std::fill(w.begin(), w.end(), 0.0);
    if (opt.random_start) {
        Rng rng(derive_seed(*opt.random_start, 0xA1FA));
        for (std::size_t i = 0; i < n; ++i) {
            alpha[i] = C * rng.uniform();
            axpy(alpha[i] * batch.targets[i], batch.rows.row(i), w);
        }
    }
    auto dual = [&]() { return 0.5 * dot(w, w) - std::accumulate(alpha.begin(), alpha.end(), 0.0); };
    double D = dual();
    diag.objective_trace.push_back(D);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(0xD0A1, n, d));
    // Tighter tolerances ask for a smaller projected-gradient spread.
    const double pg_gap = std::min(1e-3, std::sqrt(opt.relative_tolerance));
    for (int it = 1; it <= opt.max_iterations; ++it) {
        diag.iterations = it;
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double pg_max = -std::numeric_limits<double>::infinity();
        double pg_min = std::numeric_limits<double>::infinity();
        for (const auto i : order) {
            if (q[i] <= 0.0) continue;
            const auto z = batch.rows.row(i);
            const double y = batch.targets[i];
            const double G = y * dot(w, z) - 1.0;
            double pg = G;
            if (alpha[i] == 0.0) pg = std::min(G, 0.0);
            else if (alpha[i] == C) pg = std::max(G, 0.0);
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (std::abs(pg) <= 1e-12) continue;
            const double next = std::clamp(alpha[i] - G / q[i], 0.0, C);
            axpy((next - alpha[i]) * y, z, w);
            alpha[i] = next;
        }
        const double D_new = dual();
        const double change = D - D_new;
        const double previous = D;
        D = D_new;
        diag.objective_trace.push_back(D);
        if (!std::isfinite(D)) throw NumericError("dual objective became non-finite");
        if (pg_max - pg_min <= pg_gap ||
            (change <= opt.relative_tolerance * std::max(std::abs(previous), 1e-300) &&
             pg_max - pg_min <= 10 * pg_gap)) {
            diag.converged = true;
            break;
        }
    }
    return diag;
}

LossBatch pointwise_batch(const Canonical& c, const Standardizer& stdz, LossTag loss) {
    const std::size_t d = c.x.cols();
    LossBatch batch{FeatureMatrix(d + 1), {}};
    std::vector<double> row(d + 1);
    for (std::size_t i = 0; i < c.y.size(); ++i) {
        const auto z = stdz.apply(c.x.row(i));
        std::copy(z.begin(), z.end(), row.begin());
        row[d] = 1.0;
        batch.rows.push_row(row);
        batch.targets.push_back(is_classification(loss) ? (c.y[i] > kPositiveOverlap ? 1.0 : -1.0) : c.y[i]);
    }
    return batch;
}

}  // namespace

double objective(LossTag loss, std::span<const double> w, const LossBatch& batch, double C) {
    const auto m = margins(w, batch);
    return objective_from_margins(loss, w, batch, m, C);
}

std::vector<double> gradient(LossTag loss, std::span<const double> w, const LossBatch& batch, double C) {
    std::vector<double> g(w.begin(), w.end());
    for (std::size_t i = 0; i < batch.rows.rows(); ++i) {
        const auto z = batch.rows.row(i);
        axpy(C * loss_slope(loss, dot(w, z), batch.targets[i]), z, g);
    }
    return g;
}

double gradient_check(LossTag loss, std::span<const double> w, const LossBatch& batch, double C, double h) {
    const auto analytic = gradient(loss, w, batch, C);
    std::vector<double> probe(w.begin(), w.end());
    double max_diff = 0.0;
    double max_a = 0.0;
    double max_f = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        probe[k] = w[k] + h;
        const double up = objective(loss, probe, batch, C);
        probe[k] = w[k] - h;
        const double down = objective(loss, probe, batch, C);
        probe[k] = w[k];
        const double fd = (up - down) / (2.0 * h);
        max_diff = std::max(max_diff, std::abs(fd - analytic[k]));
        max_a = std::max(max_a, std::abs(analytic[k]));
        max_f = std::max(max_f, std::abs(fd));
    }
    const double denom = std::max({max_a, max_f, 1e-300});
    return max_diff == 0.0 ? 0.0 : max_diff / denom;
}

RankerModel train_pointwise(const TrainingSet& set, LossTag loss, double C, const OptimizerOptions& options) {
    if (loss == LossTag::PairwiseHinge) throw UsageError("pairwise loss needs train_pairwise");
    if (!(C > 0.0) || !std::isfinite(C)) throw DataError("regularization constant C must be positive");
    validate(set);
    const auto canon = canonicalize(set);
    if (is_classification(loss)) {
        const bool any_pos = std::any_of(canon.y.begin(), canon.y.end(), [](double y) { return y > kPositiveOverlap; });
        const bool any_neg = std::any_of(canon.y.begin(), canon.y.end(), [](double y) { return y <= kPositiveOverlap; });
        if (!any_pos || !any_neg) throw DataError("degenerate training set: a single label class");
    }

    RankerModel model;
    model.loss = loss;
    model.C = C;
    model.standardizer = Standardizer::fit(canon.x);
    const auto batch = pointwise_batch(canon, model.standardizer, loss);
    const std::size_t d = canon.x.cols();

    std::vector<double> w(d + 1, 0.0);
    if (loss == LossTag::Hinge) {
        model.diagnostics = dual_cd_solve(batch, C, w, options);
    } else {
        if (options.random_start) w = random_point(d + 1, *options.random_start);
        model.diagnostics = newton_solve(loss, batch, C, w, options);
    }
    model.diagnostics.final_objective = objective(loss, w, batch, C);
    model.weights.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(d));
    model.bias = w[d];
    return model;
}

std::vector<std::pair<std::size_t, std::size_t>> generate_pairs(std::span<const double> overlaps,
                                                                const PairPolicy& policy) {
    if (!std::is_sorted(overlaps.begin(), overlaps.end())) {
        throw UsageError("generate_pairs expects labels in ascending order");
    }
    const std::size_t n = overlaps.size();
    // For row a, partners b are the prefix of rows with y_a - y_b > margin.
    std::vector<std::size_t> count(n);
    std::vector<std::size_t> prefix(n + 1, 0);
    for (std::size_t a = 0; a < n; ++a) {
        const double ya = overlaps[a];
        count[a] = static_cast<std::size_t>(
            std::partition_point(overlaps.begin(), overlaps.end(), [&](double yb) { return ya - yb > policy.margin; }) -
            overlaps.begin());
        prefix[a + 1] = prefix[a] + count[a];
    }
    const std::size_t total = prefix[n];
    std::vector<std::pair<std::size_t, std::size_t>> pairs;

    auto rank_to_pair = [&](std::size_t rank) {
        const auto a = static_cast<std::size_t>(std::upper_bound(prefix.begin(), prefix.end(), rank) - prefix.begin()) - 1;
        return std::pair<std::size_t, std::size_t>{a, rank - prefix[a]};
    };

    if (total <= policy.max_pairs) {
        pairs.reserve(total);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < count[a]; ++b) pairs.emplace_back(a, b);
        }
        return pairs;
    }

    // Floyd's sampling of max_pairs distinct ranks.
    Rng rng(derive_seed(policy.seed, 0x9A12));
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(policy.max_pairs * 2);
    for (std::size_t j = total - policy.max_pairs; j < total; ++j) {
        const std::size_t t = static_cast<std::size_t>(rng.below(j + 1));
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<std::size_t> ranks(chosen.begin(), chosen.end());
    std::sort(ranks.begin(), ranks.end());
    pairs.reserve(ranks.size());
    for (const auto r : ranks) pairs.push_back(rank_to_pair(r));
    return pairs;
}

RankerModel train_pairwise(const TrainingSet& set, double C, const PairPolicy& policy,
                           const OptimizerOptions& options) {
    if (!(C > 0.0) || !std::isfinite(C)) throw DataError("regularization constant C must be positive");
    validate(set);
    const auto canon = canonicalize(set);
    const auto pairs = generate_pairs(canon.y, policy);
    if (pairs.empty()) throw DataError("pair policy produced no training pairs");

    RankerModel model;
    model.loss = LossTag::PairwiseHinge;
    model.C = C;
    model.standardizer = Standardizer::fit(canon.x);
    const std::size_t d = canon.x.cols();

    std::vector<std::vector<double>> z(canon.y.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = model.standardizer.apply(canon.x.row(i));
    LossBatch batch{FeatureMatrix(d), {}};
    std::vector<double> diff(d);
    for (const auto& [a, b] : pairs) {
        for (std::size_t k = 0; k < d; ++k) diff[k] = z[a][k] - z[b][k];
        batch.rows.push_row(diff);
        batch.targets.push_back(1.0);
    }

    std::vector<double> w(d, 0.0);
    model.diagnostics = dual_cd_solve(batch, C, w, options);
    model.diagnostics.final_objective = objective(LossTag::PairwiseHinge, w, batch, C);
    model.weights = std::move(w);
    model.bias = 0.0;
    return model;
}

namespace {

std::string join_exact(std::span<const double> v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) out += ' ';
        out += format_exact(v[k]);
    }
    return out;
}

std::vector<double> parse_reals(const std::string& rest, std::size_t expected, const std::string& where) {
    std::vector<double> out;
    std::istringstream in(rest);
    std::string tok;
    while (in >> tok) out.push_back(parse_double(tok, where));
    if (out.size() != expected) {
        throw DataError(where + ": expected " + std::to_string(expected) + " values, got " + std::to_string(out.size()));
    }
    return out;
}

}  // namespace

std::string format_model_file(const ModelFile& file, const std::vector<std::string>& class_names) {
    std::string out = "detfuse-ranker-models 1\n";
    for (const auto& [k, v] : file.metadata) out += "meta " + k + " " + v + "\n";
    for (const auto& m : file.models) {
        const std::string cls = m.class_id < 0 ? "*" : class_names.at(static_cast<std::size_t>(m.class_id));
        out += "model " + cls + "\n";
        out += "loss " + std::string(loss_tag_name(m.loss)) + "\n";
        out += "C " + format_exact(m.C) + "\n";
        out += "dim " + std::to_string(m.dim()) + "\n";
        out += "mean " + join_exact(m.standardizer.mean) + "\n";
        out += "scale " + join_exact(m.standardizer.scale) + "\n";
        out += "weights " + join_exact(m.weights) + "\n";
        out += "bias " + format_exact(m.bias) + "\n";
        out += "objective " + format_exact(m.diagnostics.final_objective) + "\n";
        out += "iterations " + std::to_string(m.diagnostics.iterations) + "\n";
        out += "converged " + std::string(m.diagnostics.converged ? "1" : "0") + "\n";
        out += "end\n";
    }
    return out;
}

ModelFile parse_model_file(const std::string& text, const std::vector<std::string>& class_names,
                           const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto next_line = [&](std::string& key, std::string& rest) {
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto sp = t.find(' ');
            key = t.substr(0, sp);
            rest = sp == std::string::npos ? "" : trim(std::string_view(t).substr(sp + 1));
            return true;
        }
        return false;
    };
    auto where = [&]() { return origin + ":" + std::to_string(line_no); };

    std::string key, rest;
    if (!next_line(key, rest) || key != "detfuse-ranker-models" || rest != "1") {
        throw DataError(origin + ": not a ranker model file");
    }
    ModelFile file;
    auto expect = [&](const char* want) {
        if (!next_line(key, rest) || key != want) throw DataError(where() + ": expected '" + want + "'");
        return rest;
    };
    while (next_line(key, rest)) {
        if (key == "meta") {
            const auto sp = rest.find(' ');
            file.metadata[rest.substr(0, sp)] = sp == std::string::npos ? "" : rest.substr(sp + 1);
            continue;
        }
        if (key != "model") throw DataError(where() + ": unexpected '" + key + "'");
        RankerModel m;
        if (rest == "*") {
            m.class_id = -1;
        } else {
            const auto it = std::find(class_names.begin(), class_names.end(), rest);
            if (it == class_names.end()) throw DataError(where() + ": unknown class '" + rest + "'");
            m.class_id = static_cast<int>(it - class_names.begin());
        }
        m.loss = parse_loss_tag(expect("loss"));
        m.C = parse_double(expect("C"), where());
        const long dim = parse_int(expect("dim"), where());
        if (dim < 0) throw DataError(where() + ": negative dimension");
        const auto d = static_cast<std::size_t>(dim);
        m.standardizer.mean = parse_reals(expect("mean"), d, where());
        m.standardizer.scale = parse_reals(expect("scale"), d, where());
        m.weights = parse_reals(expect("weights"), d, where());
        m.bias = parse_double(expect("bias"), where());
        m.diagnostics.final_objective = parse_double(expect("objective"), where());
        m.diagnostics.iterations = static_cast<int>(parse_int(expect("iterations"), where()));
        m.diagnostics.converged = parse_int(expect("converged"), where()) != 0;
        expect("end");
        file.models.push_back(std::move(m));
    }
    return file;
}

}  // namespace detfuse
