#include "workflow.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <set>

#include "calibration.hpp"
#include "error.hpp"
#include "random.hpp"
#include "synth.hpp"

namespace detfuse {

namespace {

const std::vector<std::string> kDefaultTrainFolds = {"train", "val"};

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"out", "output and work directory shared by all subcommands"},
        {"detectors", "detector roster, comma separated, in feature order"},
        {"classes", "class roster, comma separated"},
        {"seed", "master seed; required by simulate and train"},
        {"split", "split manifest (default <out>/data/split.manifest)"},
        {"sim.images.train", "simulated images in the train fold (default 250)"},
        {"sim.images.val", "simulated images in the val fold (default 250)"},
        {"sim.images.test", "simulated images in the test fold (default 500)"},
        {"scene.canvas_width", "canvas width in pixels (default 500)"},
        {"scene.canvas_height", "canvas height in pixels (default 375)"},
        {"scene.objects_mean", "mean objects per image, count = 1 + Poisson(mean - 1) (default 3)"},
        {"scene.min_size", "smallest object side as a fraction of canvas width (default 0.12)"},
        {"scene.max_size", "largest object side as a fraction of canvas width (default 0.45)"},
        {"scene.max_object_iou", "largest IoU allowed between two objects of an image (default 0.3)"},
        {"scene.placement_retries", "placement attempts per object before failing (default 200)"},
        {"scene.difficult_above", "objects with difficulty above this are flagged difficult (default 0.97)"},
        {"scene.class_weights", "relative class frequencies, one per class or a single value"},
        {"detector.*.skill", "per-class skill in [0,1]; detects an object iff skill > difficulty"},
        {"detector.*.sigma", "per-class corner jitter of true detections in pixels"},
        {"detector.*.fp_rate", "per-class Poisson mean of background false positives per image"},
        {"detector.*.loc_fp_rate", "per-class Poisson mean of badly localized false positives per image"},
        {"detector.*.tp_base", "true-positive score mean at difficulty 1"},
        {"detector.*.tp_gain", "added true-positive score mean per unit of (1 - difficulty)"},
        {"detector.*.tp_sd", "true-positive score spread before clipping to [0,1]"},
        {"detector.*.fp_mean", "false-positive score mean"},
        {"detector.*.fp_sd", "false-positive score spread before clipping to [0,1]"},
        {"detector.*.score_scale", "raw score = score_offset + score_scale * s"},
        {"detector.*.score_offset", "raw score offset"},
        {"detector.*.independence", "blend of a private difficulty draw into the shared one, in [0,1]"},
        {"proposals.*.count", "proposals per image for source obj, core or ees"},
        {"proposals.*.jitter", "corner noise of object-covering proposals as a fraction of box size"},
        {"proposals.*.random_fraction", "share of uniformly random proposals"},
        {"proposals.*.confidence_noise", "noise on the ees confidence around the best object overlap"},
        {"calibration.folds", "folds used to fit the sigmoids (default train,val)"},
        {"calibration.pooled", "1 fits one sigmoid per detector instead of per detector and class"},
        {"features.n_neighbors", "proposals averaged per saliency source (default 10)"},
        {"features.scores", "calibrated or raw scores inside the features (default calibrated)"},
        {"features.map", "1 applies the additive chi-squared feature map (default 0)"},
        {"features.blocks", "feature blocks to assemble, subset of rs,os,so (default rs,os,so)"},
        {"single", "detector name: featurize and train the single-detector variant"},
        {"learner.loss", "pow1 (hinge), pow2 (logistic), pow3 (squared eps-insensitive), paw1 (pairwise)"},
        {"learner.C", "regularization constant (default 1)"},
        {"learner.max_pairs", "pair cap per class for paw1 (default 100000)"},
        {"learner.tolerance", "relative objective change that stops training (default 1e-6)"},
        {"learner.max_iterations", "optimizer iteration cap (default 1000)"},
        {"learner.folds", "folds providing training rows (default train,val)"},
        {"rerank.mode", "learned, naive-i, naive-ii, naive-iii, single:<detector> or baseline:<detector>"},
        {"eval.fold", "fold that rerank, eval, analyze and bound operate on (default test)"},
        {"eval.protocol", "voc07 (11-point) or all-points (default voc07)"},
        {"nms.enabled", "1 runs cross-detector suppression after merging (default 1)"},
        {"nms.coverage", "coverage by the kept box that triggers suppression (default 0.4)"},
        {"nms.all_pairs", "1 suppresses across all boxes, not only correspondences (default 0)"},
        {"analyze.groups", "similarity groups 'name=a,b;name2=c' (default VOC animal/furniture/vehicle/person)"},
        {"bound.greedy", "1 replaces the exact maximum matching by a greedy one (default 0)"},
    };
    return keys;
}

namespace {

bool key_matches(std::string_view pattern, std::string_view key) {
    const auto p = split(pattern, '.');
    const auto k = split(key, '.');
    if (p.size() != k.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] != "*" && p[i] != k[i]) return false;
        if (k[i].empty()) return false;
    }
    return true;
}

void check_key(const std::string& key) {
    for (const auto& k : config_keys()) {
        if (key_matches(k.pattern, key)) return;
    }
    throw UsageError("unknown configuration key '" + key + "'");
}

std::vector<std::string> list_value(const KeyValueFile& kv, const std::string& key,
                                    const std::vector<std::string>& fallback) {
    const auto v = kv.get(key);
    if (!v) return fallback;
    std::vector<std::string> out;
    for (const auto& part : split(*v, ',')) {
        const auto t = trim(part);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

}  // namespace

RunConfig::RunConfig(KeyValueFile values) : values_(std::move(values)) {
    for (const auto& [k, v] : values_.values()) check_key(k);
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return RunConfig(KeyValueFile::load(path)); }

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + assignment + "' is not key=value");
    set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
    check_key(key);
    values_.set(key, value);
}

std::filesystem::path RunConfig::out_dir() const {
    const auto v = values_.get("out");
    if (!v || v->empty()) throw UsageError("configuration key 'out' (output directory) is required");
    return *v;
}

Roster RunConfig::detectors() const {
    const auto v = values_.get("detectors");
    if (!v) throw UsageError("configuration key 'detectors' is required");
    return Roster::from_list(*v);
}

Roster RunConfig::classes() const {
    const auto v = values_.get("classes");
    if (!v) throw UsageError("configuration key 'classes' is required");
    return Roster::from_list(*v);
}

std::uint64_t RunConfig::seed() const {
    const auto v = values_.get("seed");
    if (!v) throw UsageError("configuration key 'seed' is required for this step");
    const long s = parse_int(*v, "seed");
    if (s < 0) throw UsageError("seed must be non-negative");
    return static_cast<std::uint64_t>(s);
}

FeatureOptions RunConfig::feature_options() const {
    FeatureOptions o;
    o.n_neighbors = static_cast<int>(values_.get_int("features.n_neighbors", o.n_neighbors));
    if (o.n_neighbors < 1) throw UsageError("features.n_neighbors must be at least 1");
    const auto scores = values_.get_or("features.scores", "calibrated");
    if (scores != "calibrated" && scores != "raw") throw UsageError("features.scores must be calibrated or raw");
    o.use_calibrated = scores == "calibrated";
    o.feature_map = values_.get_bool("features.map", false);
    const auto blocks = list_value(values_, "features.blocks", {"rs", "os", "so"});
    o.use_rs = o.use_os = o.use_so = false;
    for (const auto& b : blocks) {
        if (b == "rs") o.use_rs = true;
        else if (b == "os") o.use_os = true;
        else if (b == "so") o.use_so = true;
        else throw UsageError("unknown feature block '" + b + "'");
    }
    if (!o.use_rs && !o.use_os && !o.use_so) throw UsageError("features.blocks selects no block");
    return o;
}

NmsOptions RunConfig::nms_options() const {
    NmsOptions o;
    o.enabled = values_.get_bool("nms.enabled", true);
    o.coverage_threshold = values_.get_double("nms.coverage", o.coverage_threshold);
    o.all_pairs = values_.get_bool("nms.all_pairs", false);
    if (!(o.coverage_threshold >= 0.0 && o.coverage_threshold <= 1.0)) {
        throw UsageError("nms.coverage must lie in [0, 1]");
    }
    return o;
}

ApProtocol RunConfig::protocol() const { return parse_protocol(values_.get_or("eval.protocol", "voc07")); }

std::filesystem::path RunConfig::split_path() const {
    if (const auto v = values_.get("split")) return *v;
    return out_dir() / "data" / "split.manifest";
}

std::string RunConfig::hash() const {
    KeyValueFile copy = values_;
    std::string text;
    for (const auto& [k, v] : copy.values()) {
        if (k == "out") continue;
        text += k + " = " + v + "\n";
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace {

std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    return out + "\r\n";
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string opt_fixed(const std::optional<double>& v) { return v ? format_fixed6(*v) : std::string("n/a"); }

// Tracks files read and written by one subcommand for its manifest.
class Session {
public:
    Session(const RunConfig& config, std::string subcommand, std::string tag = {})
        : config_(config), out_(config.out_dir()), subcommand_(std::move(subcommand)), tag_(std::move(tag)) {}

    const std::filesystem::path& out() const { return out_; }

    std::string read(const std::filesystem::path& path) {
        auto text = read_file(path);
        inputs_.emplace_back(display(path), fnv1a64(text));
        return text;
    }

    void write(const std::filesystem::path& relative, const std::string& contents) {
        write_file(out_ / relative, contents);
        outputs_.emplace_back(relative.generic_string(), fnv1a64(contents));
        result_.artifacts.push_back(relative);
    }

    void say(const std::string& line) { result_.summary += line + "\n"; }

    RunResult finish(std::optional<std::uint64_t> seed) {
        std::string m;
        m += "subcommand = " + subcommand_ + "\n";
        if (!tag_.empty()) m += "tag = " + tag_ + "\n";
        m += "version = " + std::string(DETFUSE_VERSION) + "\n";
        m += "seed = " + (seed ? std::to_string(*seed) : std::string("none")) + "\n";
        m += "config_hash = " + config_.hash() + "\n";
        for (const auto& [k, v] : config_.values().values()) {
            if (k != "out") m += "config." + k + " = " + v + "\n";
        }
        for (const auto& [p, h] : inputs_) m += "input." + p + " = " + hex64(h) + "\n";
        for (const auto& [p, h] : outputs_) m += "output." + p + " = " + hex64(h) + "\n";
        const std::filesystem::path rel =
            std::filesystem::path("manifests") / (subcommand_ + (tag_.empty() ? "" : "." + tag_) + ".txt");
        write_file(out_ / rel, m);
        result_.artifacts.push_back(rel);
        return result_;
    }

private:
    std::string display(const std::filesystem::path& path) const {
        const auto rel = path.lexically_relative(out_);
        if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
        return path.lexically_normal().generic_string();
    }

    const RunConfig& config_;
    std::filesystem::path out_;
    std::string subcommand_;
    std::string tag_;
    std::vector<std::pair<std::string, std::uint64_t>> inputs_;
    std::vector<std::pair<std::string, std::uint64_t>> outputs_;
    RunResult result_;
};

SplitManifest load_split(const RunConfig& config, Session* session) {
    const auto path = config.split_path();
    if (session) session->read(path);
    return assemble_split(load_split_manifest(path));
}

FoldData load_fold_impl(const RunConfig& config, const SplitManifest& split, const std::string& fold, bool calibrated,
                        Session* session) {
    if (!split.folds.count(fold)) throw DataError("split manifest has no fold '" + fold + "'");
    const auto& files = split.fold(fold);
    const auto detectors = config.detectors();
    const auto classes = config.classes();
    auto read = [&](const std::filesystem::path& p) { return session ? session->read(p) : read_file(p); };
    FoldData data;
    data.corpus = parse_detections(read(files.detections), detectors, classes, files.detections.string());
    data.gt = parse_ground_truth(read(files.ground_truth), classes, files.ground_truth.string());
    if (!files.proposals.empty()) data.proposals = parse_proposals(read(files.proposals), files.proposals.string());
    if (calibrated) {
        const auto path = config.out_dir() / "calibration.tsv";
        if (!std::filesystem::exists(path)) throw DataError("missing " + path.string() + "; run calibrate first");
        const auto table = CalibrationTable::parse(read(path), detectors, classes, path.string());
        apply_calibration(data.corpus, table);
    }
    return data;
}

std::vector<std::string> folds_key(const RunConfig& config, const std::string& key) {
    auto folds = list_value(config.values(), key, kDefaultTrainFolds);
    if (folds.empty()) throw UsageError(key + " lists no fold");
    for (const auto& f : folds) {
        if (std::find(kFoldNames.begin(), kFoldNames.end(), f) == kFoldNames.end()) {
            throw UsageError(key + ": unknown fold '" + f + "'");
        }
    }
    return folds;
}

std::string eval_fold(const RunConfig& config) {
    const auto f = config.values().get_or("eval.fold", "test");
    if (std::find(kFoldNames.begin(), kFoldNames.end(), f) == kFoldNames.end()) {
        throw UsageError("eval.fold: unknown fold '" + f + "'");
    }
    return f;
}

// "" for the full roster, otherwise the single detector name.
std::string single_detector(const RunConfig& config) {
    const auto v = config.values().get_or("single", "");
    if (!v.empty()) config.detectors().id(v);
    return v;
}

std::string single_suffix(const std::string& single) { return single.empty() ? "" : ".single-" + single; }

DetectionCorpus maybe_restrict(const DetectionCorpus& corpus, const std::string& single) {
    return single.empty() ? corpus : corpus.restrict_to_detector(corpus.detectors().id(single));
}

std::filesystem::path features_file(const std::string& fold, const std::string& single) {
    return std::filesystem::path("features") / (fold + single_suffix(single) + ".tsv");
}

std::filesystem::path models_file(const std::string& single) { return "models" + single_suffix(single) + ".txt"; }

// ---- simulate ----

RunResult run_simulate(const RunConfig& config) {
    Session s(config, "simulate");
    const auto seed = config.seed();
    const auto detectors = config.detectors();
    const auto classes = config.classes();
    const auto& kv = config.values();
    const auto spec = parse_scene_spec(kv, classes);
    std::vector<DetectorProfile> profiles;
    for (const auto& name : detectors.names()) profiles.push_back(parse_detector_profile(kv, name, classes));
    const auto sources = parse_proposal_specs(kv);

    const std::pair<const char*, long> folds[] = {{"train", kv.get_int("sim.images.train", 250)},
                                                  {"val", kv.get_int("sim.images.val", 250)},
                                                  {"test", kv.get_int("sim.images.test", 500)}};
    // Detections of each fold come from models trained on the complementary data.
    const std::map<std::string, std::string> provenance = {{"train", "val"}, {"val", "train"}, {"test", "trainval"}};
    SplitManifest manifest;
    std::uint64_t stream = 0;
    for (const auto& [fold, n] : folds) {
        ++stream;
        if (n < 1 || n > 1000000) throw UsageError(std::string("sim.images.") + fold + " must be in [1, 1000000]");
        const auto scene = generate_ground_truth(spec, classes, static_cast<int>(n), derive_seed(seed, stream, 0), fold);
        const auto corpus = simulate_detectors(scene, spec, profiles, detectors, derive_seed(seed, stream, 1));
        const auto proposals = simulate_proposals(scene, spec, sources, derive_seed(seed, stream, 2));
        const std::string f(fold);
        s.write("data/" + f + ".gt.tsv", format_ground_truth(scene.gt));
        s.write("data/" + f + ".det.tsv", format_detections(corpus));
        s.write("data/" + f + ".prop.tsv", format_proposals(proposals));
        s.write("data/" + f + ".latent.tsv", format_latent_sidecar(scene));
        manifest.folds[f] = {f + ".det.tsv", f + ".gt.tsv", f + ".prop.tsv", provenance.at(f)};
        s.say(f + ": " + std::to_string(n) + " images, " + std::to_string(scene.gt.objects.size()) + " objects, " +
              std::to_string(corpus.size()) + " detections");
    }
    assemble_split(manifest);
    s.write("data/split.manifest", format_split_manifest(manifest));
    return s.finish(seed);
}

// ---- calibrate ----

RunResult run_calibrate(const RunConfig& config) {
    Session s(config, "calibrate");
    const auto split = load_split(config, &s);
    std::vector<FoldData> folds;
    for (const auto& f : folds_key(config, "calibration.folds")) folds.push_back(load_fold_impl(config, split, f, false, &s));
    std::vector<GroundTruthIndex> indices;
    indices.reserve(folds.size());
    for (const auto& f : folds) indices.emplace_back(f.gt);
    std::vector<const DetectionCorpus*> corpora;
    std::vector<const GroundTruthIndex*> truths;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        corpora.push_back(&folds[i].corpus);
        truths.push_back(&indices[i]);
    }
    const auto table = fit_calibration_table(corpora, truths, config.values().get_bool("calibration.pooled", false));
    s.write("calibration.tsv", table.format(config.detectors(), config.classes()));
    s.say("calibrated " + std::to_string(table.entries().size()) + " detector/class pairs");
    return s.finish(std::nullopt);
}

// ---- featurize ----

RunResult run_featurize(const RunConfig& config) {
    const auto single = single_detector(config);
    Session s(config, "featurize", single.empty() ? "" : "single-" + single);
    const auto split = load_split(config, &s);
    const auto options = config.feature_options();
    auto folds = folds_key(config, "learner.folds");
    const auto ef = eval_fold(config);
    if (std::find(folds.begin(), folds.end(), ef) == folds.end()) folds.push_back(ef);
    for (const auto& f : folds) {
        const auto data = load_fold_impl(config, split, f, true, &s);
        const auto corpus = maybe_restrict(data.corpus, single);
        const auto table = compute_features(corpus, data.proposals, options);
        s.write(features_file(f, single), format_feature_dump(corpus, table));
        s.say(f + ": " + std::to_string(corpus.size()) + " rows x " + std::to_string(table.dim) + " features");
    }
    return s.finish(std::nullopt);
}

// ---- train ----

FeatureTable read_features(Session& s, const RunConfig& config, const DetectionCorpus& corpus, const std::string& fold,
                           const std::string& single) {
    const FeatureLayout layout{corpus.detectors().size(), corpus.classes().size()};
    const auto dim = feature_dimension(layout, config.feature_options());
    const auto path = s.out() / features_file(fold, single);
    if (!std::filesystem::exists(path)) throw DataError("missing " + path.string() + "; run featurize first");
    return parse_feature_dump(s.read(path), corpus, dim, path.string());
}

RunResult run_train(const RunConfig& config) {
    const auto single = single_detector(config);
    Session s(config, "train", single.empty() ? "" : "single-" + single);
    const auto seed = config.seed();
    const auto split = load_split(config, &s);
    const auto& kv = config.values();
    const auto loss = parse_loss_tag(kv.get_or("learner.loss", "pow2"));
    const double C = kv.get_double("learner.C", 1.0);
    OptimizerOptions opt;
    opt.relative_tolerance = kv.get_double("learner.tolerance", opt.relative_tolerance);
    opt.max_iterations = static_cast<int>(kv.get_int("learner.max_iterations", opt.max_iterations));
    const long max_pairs = kv.get_int("learner.max_pairs", 100000);
    if (max_pairs < 1) throw UsageError("learner.max_pairs must be positive");

    const auto classes = config.classes();
    std::vector<TrainingSet> sets;
    std::size_t dim = 0;
    for (const auto& f : folds_key(config, "learner.folds")) {
        const auto data = load_fold_impl(config, split, f, false, &s);
        const auto corpus = maybe_restrict(data.corpus, single);
        const auto table = read_features(s, config, corpus, f, single);
        dim = table.dim;
        if (sets.empty()) sets.assign(static_cast<std::size_t>(classes.size()), TrainingSet{FeatureMatrix(dim), {}});
        const GroundTruthIndex gt(data.gt);
        const auto labels = overlap_labels(corpus, gt);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            auto& set = sets[static_cast<std::size_t>(corpus[i].class_id)];
            set.features.push_row(table.row(i));
            set.overlaps.push_back(labels[i]);
        }
    }

    ModelFile file;
    file.metadata["detectors"] = single.empty() ? config.detectors().to_list() : single;
    file.metadata["classes"] = classes.to_list();
    file.metadata["dim"] = std::to_string(dim);
    file.metadata["config_hash"] = config.hash();
    for (int c = 0; c < classes.size(); ++c) {
        const auto& set = sets[static_cast<std::size_t>(c)];
        if (set.overlaps.empty()) {
            s.say("class " + classes.name(c) + ": no training rows, skipped");
            continue;
        }
        RankerModel m;
        try {
            if (loss == LossTag::PairwiseHinge) {
                m = train_pairwise(set, C, {kPairMargin, static_cast<std::size_t>(max_pairs), derive_seed(seed, 7, static_cast<std::uint64_t>(c))},
                                   opt);
            } else {
                m = train_pointwise(set, loss, C, opt);
            }
        } catch (const DataError& e) {
            throw DataError("class '" + classes.name(c) + "': " + e.what());
        }
        m.class_id = c;
        s.say("class " + classes.name(c) + ": " + std::to_string(set.overlaps.size()) + " rows, objective " +
              format_fixed6(m.diagnostics.final_objective) + ", " + std::to_string(m.diagnostics.iterations) +
              " iterations" + (m.diagnostics.converged ? "" : " (not converged)"));
        file.models.push_back(std::move(m));
    }
    s.write(models_file(single), format_model_file(file, classes.names()));
    return s.finish(seed);
}

// ---- rerank ----

struct ModeSpec {
    std::string mode;    // learned, naive-i, naive-ii, naive-iii, single, baseline
    std::string detector;
    std::string tag;     // file-name form
};

ModeSpec parse_mode(const std::string& text) {
    ModeSpec m;
    const auto colon = text.find(':');
    m.mode = text.substr(0, colon);
    if (colon != std::string::npos) m.detector = text.substr(colon + 1);
    static const std::set<std::string> plain = {"learned", "naive-i", "naive-ii", "naive-iii"};
    if (plain.count(m.mode)) {
        if (!m.detector.empty()) throw UsageError("mode '" + m.mode + "' takes no detector");
        m.tag = m.mode;
    } else if (m.mode == "single" || m.mode == "baseline") {
        if (m.detector.empty()) throw UsageError("mode '" + m.mode + "' needs a detector: " + m.mode + ":<name>");
        m.tag = m.mode + "-" + m.detector;
    } else {
        throw UsageError("unknown rerank mode '" + text + "'");
    }
    return m;
}

ModeSpec config_mode(const RunConfig& config) {
    const auto m = parse_mode(config.values().get_or("rerank.mode", "learned"));
    if (!m.detector.empty()) config.detectors().id(m.detector);
    return m;
}

std::vector<int> detector_order_by_training_map(const RunConfig& config, const SplitManifest& split, Session& s) {
    const auto detectors = config.detectors();
    const auto classes = config.classes();
    DetectionCorpus all(detectors, classes);
    GroundTruthSet gt{classes, {}};
    for (const auto& f : folds_key(config, "learner.folds")) {
        const auto data = load_fold_impl(config, split, f, true, &s);
        for (const auto& d : data.corpus.detections()) all.add(d);
        gt.objects.insert(gt.objects.end(), data.gt.objects.begin(), data.gt.objects.end());
    }
    const GroundTruthIndex index(gt);
    std::vector<std::pair<double, int>> ranked;
    for (int j = 0; j < detectors.size(); ++j) {
        const auto list = detector_baseline(all, j);
        const double map = evaluate(list, index).mean_ap(config.protocol()).value_or(0.0);
        ranked.emplace_back(-map, j);
        s.say("training-fold mAP " + detectors.name(j) + " " + format_fixed6(map));
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> order;
    for (const auto& [m, j] : ranked) order.push_back(j);
    return order;
}

RunResult run_rerank(const RunConfig& config) {
    const auto mode = config_mode(config);
    Session s(config, "rerank", mode.tag);
    const auto split = load_split(config, &s);
    const auto fold = eval_fold(config);
    const auto data = load_fold_impl(config, split, fold, true, &s);
    const auto nms = config.nms_options();
    const auto classes = config.classes();

    RankedDetectionList list;
    Roster roster = config.detectors();
    if (mode.mode == "learned" || mode.mode == "single") {
        const std::string single = mode.mode == "single" ? mode.detector : "";
        const auto corpus = maybe_restrict(data.corpus, single);
        roster = corpus.detectors();
        const auto features = read_features(s, config, corpus, fold, single);
        const auto path = s.out() / models_file(single);
        if (!std::filesystem::exists(path)) throw DataError("missing " + path.string() + "; run train first");
        const auto models = parse_model_file(s.read(path), classes.names(), path.string());
        list = single.empty() ? rerank(corpus, models.models, features, nms)
                              : single_detector_rerank(corpus, models.models, features, nms);
    } else if (mode.mode == "baseline") {
        const auto corpus = data.corpus.restrict_to_detector(data.corpus.detectors().id(mode.detector));
        roster = corpus.detectors();
        list = detector_baseline(corpus, 0);
    } else if (mode.mode == "naive-i") {
        list = naive_merge(data.corpus, NaiveMode::I, {}, nms);
    } else if (mode.mode == "naive-ii") {
        list = naive_merge(data.corpus, NaiveMode::II, {}, nms);
    } else {
        const auto order = detector_order_by_training_map(config, split, s);
        list = naive_merge(data.corpus, NaiveMode::III, order, nms);
    }
    std::size_t kept = 0;
    for (const auto& e : list) kept += e.suppressed ? 0 : 1;
    s.write(std::filesystem::path("ranked") / (mode.tag + ".tsv"), format_ranked_list(list, roster, classes, true));
    s.say(mode.tag + ": " + std::to_string(list.size()) + " detections, " + std::to_string(list.size() - kept) +
          " suppressed");
    return s.finish(std::nullopt);
}

// ---- eval / analyze ----

struct RankedInput {
    ModeSpec mode;
    Roster roster;
    RankedDetectionList list;
    GroundTruthSet gt;
};

RankedInput load_ranked(const RunConfig& config, Session& s) {
    RankedInput in;
    in.mode = config_mode(config);
    const auto split = load_split(config, &s);
    const auto fold = eval_fold(config);
    const auto& files = split.fold(fold);
    in.gt = parse_ground_truth(s.read(files.ground_truth), config.classes(), files.ground_truth.string());
    in.roster = in.mode.detector.empty() ? config.detectors() : Roster({in.mode.detector});
    const auto path = s.out() / "ranked" / (in.mode.tag + ".tsv");
    if (!std::filesystem::exists(path)) throw DataError("missing " + path.string() + "; run rerank first");
    in.list = parse_ranked_list(s.read(path), in.roster, config.classes(), path.string());
    return in;
}

RunResult run_eval(const RunConfig& config) {
    const auto tag = config_mode(config).tag;
    Session s(config, "eval", tag);
    const auto in = load_ranked(config, s);
    const GroundTruthIndex gt(in.gt);
    const auto report = evaluate(in.list, gt);
    const auto classes = config.classes();

    std::string text = "class\tpositives\tAP(voc07)\tAP(all-points)\n";
    std::string csv = csv_row({"class", "positives", "ap_voc07", "ap_all_points"});
    for (const auto& ce : report.classes) {
        const auto& name = classes.name(ce.class_id);
        text += name + '\t' + std::to_string(ce.n_positives) + '\t' + opt_fixed(ce.ap_voc07) + '\t' +
                opt_fixed(ce.ap_all_points) + '\n';
        csv += csv_row({name, std::to_string(ce.n_positives), opt_fixed(ce.ap_voc07), opt_fixed(ce.ap_all_points)});
    }
    const auto m07 = report.mean_ap(ApProtocol::Voc07ElevenPoint);
    const auto mall = report.mean_ap(ApProtocol::AllPoints);
    text += "mAP\t\t" + opt_fixed(m07) + '\t' + opt_fixed(mall) + '\n';
    csv += csv_row({"mAP", "", opt_fixed(m07), opt_fixed(mall)});
    s.write(std::filesystem::path("eval") / (tag + ".txt"), text);
    s.write(std::filesystem::path("eval") / (tag + ".csv"), csv);
    const auto protocol = config.protocol();
    s.say("mAP " + std::string(protocol_name(protocol)) + " " +
          opt_fixed(protocol == ApProtocol::AllPoints ? mall : m07) + " (" + tag + ")");
    return s.finish(std::nullopt);
}

RunResult run_analyze(const RunConfig& config) {
    const auto tag = config_mode(config).tag;
    Session s(config, "analyze", tag);
    const auto in = load_ranked(config, s);
    const auto classes = config.classes();
    const GroundTruthIndex gt(in.gt);
    auto report = evaluate(in.list, gt);

    const auto groups_spec = config.values().get("analyze.groups");
    const auto groups = groups_spec ? SimilarityGroups::parse(classes, *groups_spec) : SimilarityGroups::voc_default(classes);
    const auto rows = fp_taxonomy(in.list, gt, report, classes, groups);
    std::string fp = csv_row({"scope", "top_fp", "counted", "loc", "sim", "oth", "bg"});
    for (const auto& r : rows) {
        fp += csv_row({r.scope, std::to_string(r.fp_count), std::to_string(r.counted), format_fixed6(r.fraction[0]),
                       format_fixed6(r.fraction[1]), format_fixed6(r.fraction[2]), format_fixed6(r.fraction[3])});
    }
    s.write(std::filesystem::path("analysis") / (tag + ".fp_taxonomy.csv"), fp);

    std::string pr = csv_row({"class", "protocol", "rank", "recall", "precision"});
    for (const auto& ce : report.classes) {
        const auto hits = ce.hits();
        const auto curve = pr_curve(hits, ce.n_positives, ApProtocol::AllPoints);
        if (!curve) continue;
        for (std::size_t k = 0; k < curve->recall.size(); ++k) {
            pr += csv_row({classes.name(ce.class_id), std::string(protocol_name(curve->protocol)), std::to_string(k + 1),
                           format_fixed6(curve->recall[k]), format_fixed6(curve->precision[k])});
        }
    }
    s.write(std::filesystem::path("analysis") / (tag + ".pr_curves.csv"), pr);

    if (in.mode.mode == "learned" || in.mode.mode == "single") {
        const std::string single = in.mode.mode == "single" ? in.mode.detector : "";
        const auto path = s.out() / models_file(single);
        const auto models = parse_model_file(s.read(path), classes.names(), path.string());
        const auto importance = feature_importance(models.models);
        const auto names = feature_names(in.roster, classes, config.feature_options());
        if (names.size() != importance.size()) throw DataError("model dimension does not match the feature options");
        std::string fi = csv_row({"feature", "mean_abs_weight"});
        for (std::size_t k = 0; k < names.size(); ++k) fi += csv_row({names[k], format_fixed6(importance[k])});
        s.write(std::filesystem::path("analysis") / (tag + ".feature_importance.csv"), fi);
    }
    for (const auto& r : rows) {
        if (r.scope == "all" && r.fp_count == rows.back().fp_count) {
            s.say("fp types over " + std::to_string(r.counted) + " FPs: loc " + format_fixed6(r.fraction[0]) + ", sim " +
                  format_fixed6(r.fraction[1]) + ", oth " + format_fixed6(r.fraction[2]) + ", bg " +
                  format_fixed6(r.fraction[3]));
        }
    }
    return s.finish(std::nullopt);
}

// ---- bound ----

RunResult run_bound(const RunConfig& config) {
    Session s(config, "bound");
    const auto split = load_split(config, &s);
    const auto data = load_fold_impl(config, split, eval_fold(config), false, &s);
    const GroundTruthIndex gt(data.gt);
    const auto detectors = config.detectors();
    const auto classes = config.classes();
    const bool greedy = config.values().get_bool("bound.greedy", false);
    const int n = detectors.size();
    if (n > 16) throw UsageError("bound enumerates detector subsets; at most 16 detectors");

    std::vector<unsigned> masks;
    for (unsigned m = 1; m < (1u << n); ++m) masks.push_back(m);
    std::stable_sort(masks.begin(), masks.end(),
                     [](unsigned a, unsigned b) { return std::popcount(a) < std::popcount(b); });

    std::vector<std::string> header = {"detectors", "map_voc07", "map_all_points"};
    for (const auto& c : classes.names()) header.push_back("ap_voc07:" + c);
    std::string csv = csv_row(header);
    for (const unsigned mask : masks) {
        RankedDetectionList list;
        std::string name;
        for (int j = 0; j < n; ++j) {
            if (mask & (1u << j)) name += (name.empty() ? "" : "+") + detectors.name(j);
        }
        for (const auto& d : data.corpus.detections()) {
            if (mask & (1u << d.detector_id)) list.push_back({d, d.raw_score, false});
        }
        const auto b = maximal_map(list, gt, greedy);
        std::vector<std::string> row = {name, opt_fixed(b.mean_ap(ApProtocol::Voc07ElevenPoint)),
                                        opt_fixed(b.mean_ap(ApProtocol::AllPoints))};
        for (const auto& ap : b.ap_voc07) row.push_back(opt_fixed(ap));
        csv += csv_row(row);
        s.say("maximal mAP " + name + " " + opt_fixed(b.mean_ap(config.protocol())));
    }
    s.write("bound/maximal_map.csv", csv);
    return s.finish(std::nullopt);
}

}  // namespace

FoldData load_fold(const RunConfig& config, const std::string& fold, bool calibrated) {
    const auto split = load_split(config, nullptr);
    return load_fold_impl(config, split, fold, calibrated, nullptr);
}

std::vector<double> overlap_labels(const DetectionCorpus& corpus, const GroundTruthIndex& gt) {
    std::vector<double> labels(corpus.size(), 0.0);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& d = corpus[i];
        for (const auto& o : gt.objects(d.image_id, d.class_id)) labels[i] = std::max(labels[i], iou(d.box, o.box));
    }
    return labels;
}

RunResult run_subcommand(const std::string& name, const RunConfig& config) {
    if (name == "simulate") return run_simulate(config);
    if (name == "calibrate") return run_calibrate(config);
    if (name == "featurize") return run_featurize(config);
    if (name == "train") return run_train(config);
    if (name == "rerank") return run_rerank(config);
    if (name == "eval") return run_eval(config);
    if (name == "analyze") return run_analyze(config);
    if (name == "bound") return run_bound(config);
    throw UsageError("unknown subcommand '" + name + "'");
}

}  // namespace detfuse
