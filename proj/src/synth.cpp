#include "synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "error.hpp"
#include "geometry.hpp"
#include "random.hpp"

namespace detfuse {

namespace {

constexpr double kMinSide = 2.0;

// Values go through the six-decimal text form so in-memory corpora equal reloaded files.
double snap(double v) { return std::strtod(format_fixed6(v).c_str(), nullptr); }

BoundingBox snapped_box(double x0, double y0, double x1, double y1, const SceneSpec& spec) {
    x0 = std::clamp(x0, 0.0, spec.canvas_width - kMinSide);
    y0 = std::clamp(y0, 0.0, spec.canvas_height - kMinSide);
    x1 = std::clamp(x1, x0 + kMinSide, spec.canvas_width);
    y1 = std::clamp(y1, y0 + kMinSide, spec.canvas_height);
    return BoundingBox(snap(x0), snap(y0), snap(x1), snap(y1));
}

BoundingBox random_box(Rng& rng, const SceneSpec& spec) {
    const double w = std::min(rng.uniform(spec.min_size, spec.max_size) * spec.canvas_width, 0.9 * spec.canvas_width);
    const double h = std::min(w * std::exp(rng.uniform(-0.4, 0.4)), 0.9 * spec.canvas_height);
    const double x = rng.uniform(0.0, spec.canvas_width - w);
    const double y = rng.uniform(0.0, spec.canvas_height - h);
    return snapped_box(x, y, x + w, y + h, spec);
}

BoundingBox jitter_box(Rng& rng, const BoundingBox& b, double sx, double sy, const SceneSpec& spec) {
    const double x0 = b.x_min() + rng.normal(0.0, sx);
    const double y0 = b.y_min() + rng.normal(0.0, sy);
    const double x1 = b.x_max() + rng.normal(0.0, sx);
    const double y1 = b.y_max() + rng.normal(0.0, sy);
    return snapped_box(x0, y0, x1, y1, spec);
}

double clipped_normal(Rng& rng, double mean, double sd) { return std::clamp(rng.normal(mean, sd), 0.0, 1.0); }

int pick_class(Rng& rng, const std::vector<double>& cumulative) {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                                     static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
}

std::string image_name(const std::string& prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%06d", index);
    return prefix + buf;
}

enum Stream : std::uint64_t { kSceneStream = 1, kDetectorStream = 2, kProposalStream = 3 };

}  // namespace

SyntheticScene generate_ground_truth(const SceneSpec& spec, const Roster& classes, int n_images, std::uint64_t seed,
                                     const std::string& prefix) {
    if (n_images < 1) throw DataError("scene generation needs at least one image");
    if (classes.size() < 1) throw DataError("scene generation needs at least one class");
    if (!(spec.min_size > 0.0 && spec.min_size <= spec.max_size && spec.max_size < 1.0)) {
        throw DataError("object size range must satisfy 0 < min_size <= max_size < 1");
    }
    if (!(spec.canvas_width > 10.0 && spec.canvas_height > 10.0)) throw DataError("canvas too small");
    if (spec.objects_mean < 1.0) throw DataError("objects_mean must be at least 1");

    std::vector<double> cumulative;
    const auto n_cls = static_cast<std::size_t>(classes.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < n_cls; ++c) {
        const double w = spec.class_weights.empty() ? 1.0 : spec.class_weights.at(c);
        if (w < 0.0) throw DataError("class weights must be non-negative");
        acc += w;
        cumulative.push_back(acc);
    }
    if (!(acc > 0.0)) throw DataError("class weights sum to zero");

    SyntheticScene scene;
    scene.gt.classes = classes;
    for (int i = 0; i < n_images; ++i) {
        Rng rng(derive_seed(seed, kSceneStream, static_cast<std::uint64_t>(i)));
        const std::string id = image_name(prefix, i);
        scene.image_ids.push_back(id);
        const int count = 1 + rng.poisson(spec.objects_mean - 1.0);
        std::vector<BoundingBox> placed;
        for (int k = 0; k < count; ++k) {
            const int cls = pick_class(rng, cumulative);
            bool ok = false;
            for (int attempt = 0; attempt < spec.placement_retries && !ok; ++attempt) {
                const auto box = random_box(rng, spec);
                ok = std::all_of(placed.begin(), placed.end(),
                                 [&](const BoundingBox& p) { return iou(p, box) <= spec.max_object_iou; });
                if (ok) placed.push_back(box);
            }
            if (!ok) {
                throw DataError("could not place object " + std::to_string(k + 1) + " of image '" + id + "' after " +
                                std::to_string(spec.placement_retries) + " attempts");
            }
            const double u = snap(rng.uniform());
            scene.gt.objects.push_back({id, cls, placed.back(), u > spec.difficult_above});
            scene.latent.push_back(u);
        }
    }
    return scene;
}

std::string format_latent_sidecar(const SyntheticScene& scene) {
    std::string out;
    for (std::size_t i = 0; i < scene.gt.objects.size(); ++i) {
        const auto& o = scene.gt.objects[i];
        out += o.image_id + '\t' + scene.gt.classes.name(o.class_id) + '\t' + format_fixed6(o.box.x_min()) + '\t' +
               format_fixed6(o.box.y_min()) + '\t' + format_fixed6(o.box.x_max()) + '\t' +
               format_fixed6(o.box.y_max()) + '\t' + format_fixed6(scene.latent[i]) + '\n';
    }
    return out;
}

namespace {

void validate_profile(const DetectorProfile& p, std::size_t n_classes) {
    if (p.classes.size() != n_classes) throw DataError("detector profile must cover every class");
    for (const auto& c : p.classes) {
        if (!(c.skill >= 0.0 && c.skill <= 1.0)) throw DataError("detector skill must lie in [0, 1]");
        if (!(c.sigma >= 0.0) || !(c.fp_rate >= 0.0) || !(c.loc_fp_rate >= 0.0)) {
            throw DataError("detector sigma and rates must be non-negative");
        }
    }
    if (!(p.tp_sd >= 0.0 && p.fp_sd >= 0.0)) throw DataError("score spreads must be non-negative");
    if (!(p.score_scale > 0.0)) throw DataError("score_scale must be positive");
    if (!(p.independence >= 0.0 && p.independence <= 1.0)) throw DataError("independence must lie in [0, 1]");
}

// Detections of one detector on one image, appended to `out`.
void detect_image(const SyntheticScene& scene, const SceneSpec& spec, const DetectorProfile& profile,
                  int detector_id, std::size_t image_index, std::span<const std::size_t> objects, std::uint64_t seed,
                  std::vector<Detection>& out) {
    Rng rng(derive_seed(seed, kDetectorStream, image_index));
    const std::string& id = scene.image_ids[image_index];
    auto raw = [&](double s) { return snap(profile.score_offset + profile.score_scale * s); };

    for (const auto k : objects) {
        const auto& o = scene.gt.objects[k];
        const auto& cp = profile.classes[static_cast<std::size_t>(o.class_id)];
        const double own = rng.uniform();
        const double u = (1.0 - profile.independence) * scene.latent[k] + profile.independence * own;
        if (!(cp.skill > u)) continue;
        const auto box = jitter_box(rng, o.box, cp.sigma, cp.sigma, spec);
        const double s = clipped_normal(rng, profile.tp_base + profile.tp_gain * (1.0 - u), profile.tp_sd);
        out.push_back({id, o.class_id, detector_id, box, raw(s), std::nullopt});
    }
    for (std::size_t c = 0; c < profile.classes.size(); ++c) {
        const auto& cp = profile.classes[c];
        std::vector<std::size_t> same;
        for (const auto k : objects) {
            if (scene.gt.objects[k].class_id == static_cast<int>(c)) same.push_back(k);
        }
        // False positives must not land on a same-class object at the matching threshold.
        auto clear = [&](const BoundingBox& box) {
            return std::all_of(same.begin(), same.end(),
                               [&](std::size_t k) { return iou(scene.gt.objects[k].box, box) <= 0.5; });
        };
        const int n_bg = rng.poisson(cp.fp_rate);
        for (int f = 0; f < n_bg; ++f) {
            auto box = random_box(rng, spec);
            for (int attempt = 1; attempt < spec.placement_retries && !clear(box); ++attempt) box = random_box(rng, spec);
            const double s = clipped_normal(rng, profile.fp_mean, profile.fp_sd);
            if (clear(box)) out.push_back({id, static_cast<int>(c), detector_id, box, raw(s), std::nullopt});
        }
        const int n_loc = rng.poisson(cp.loc_fp_rate);
        for (int f = 0; f < n_loc && !same.empty(); ++f) {
            const auto& o = scene.gt.objects[same[rng.below(same.size())]];
            // Shifted by 35-70% of the box size along x, so IoU stays below 0.5. The shift
            // points away from the nearer canvas edge so clipping does not undo it.
            const bool room_left = o.box.x_min() > spec.canvas_width - o.box.x_max();
            const double fx = rng.uniform(0.35, 0.7) * (room_left ? -1.0 : 1.0);
            const double fy = rng.uniform(0.0, 0.3) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            const double dx = fx * o.box.width();
            const double dy = fy * o.box.height();
            const auto box = snapped_box(o.box.x_min() + dx, o.box.y_min() + dy, o.box.x_max() + dx,
                                         o.box.y_max() + dy, spec);
            const double s = clipped_normal(rng, 0.5 * (profile.fp_mean + profile.tp_base), profile.fp_sd);
            if (clear(box)) out.push_back({id, static_cast<int>(c), detector_id, box, raw(s), std::nullopt});
        }
    }
}

std::vector<std::vector<std::size_t>> objects_by_image(const SyntheticScene& scene) {
    std::vector<std::vector<std::size_t>> by(scene.image_ids.size());
    std::size_t img = 0;
    for (std::size_t k = 0; k < scene.gt.objects.size(); ++k) {
        while (img < scene.image_ids.size() && scene.image_ids[img] != scene.gt.objects[k].image_id) ++img;
        if (img == scene.image_ids.size()) throw DataError("scene objects are not in image order");
        by[img].push_back(k);
    }
    return by;
}

}  // namespace

DetectionCorpus simulate_detector(const SyntheticScene& scene, const SceneSpec& spec, const DetectorProfile& profile,
                                  const Roster& detectors, int detector_id, std::uint64_t seed) {
    validate_profile(profile, static_cast<std::size_t>(scene.gt.classes.size()));
    if (detector_id < 0 || detector_id >= detectors.size()) throw DataError("detector id outside roster");
    const auto by_image = objects_by_image(scene);
    DetectionCorpus corpus(detectors, scene.gt.classes);
    std::vector<Detection> dets;
    const auto stream_seed = derive_seed(seed, static_cast<std::uint64_t>(detector_id));
    for (std::size_t i = 0; i < scene.image_ids.size(); ++i) {
        dets.clear();
        detect_image(scene, spec, profile, detector_id, i, by_image[i], stream_seed, dets);
        for (auto& d : dets) corpus.add(std::move(d));
    }
    return corpus;
}

DetectionCorpus simulate_detectors(const SyntheticScene& scene, const SceneSpec& spec,
                                   const std::vector<DetectorProfile>& profiles, const Roster& detectors,
                                   std::uint64_t seed) {
    if (static_cast<int>(profiles.size()) != detectors.size()) throw DataError("one profile per detector required");
    for (const auto& p : profiles) validate_profile(p, static_cast<std::size_t>(scene.gt.classes.size()));
    const auto by_image = objects_by_image(scene);
    DetectionCorpus corpus(detectors, scene.gt.classes);
    std::vector<Detection> dets;
    for (std::size_t i = 0; i < scene.image_ids.size(); ++i) {
        for (int j = 0; j < detectors.size(); ++j) {
            dets.clear();
            detect_image(scene, spec, profiles[static_cast<std::size_t>(j)], j, i, by_image[i],
                         derive_seed(seed, static_cast<std::uint64_t>(j)), dets);
            for (auto& d : dets) corpus.add(std::move(d));
        }
    }
    return corpus;
}

ProposalSet simulate_proposals(const SyntheticScene& scene, const SceneSpec& spec,
                               const std::array<ProposalSourceSpec, kProposalSources>& sources, std::uint64_t seed) {
    for (const auto& s : sources) {
        if (s.count < 0 || !(s.jitter >= 0.0) || !(s.random_fraction >= 0.0 && s.random_fraction <= 1.0) ||
            !(s.confidence_noise >= 0.0)) {
            throw DataError("invalid proposal source settings");
        }
    }
    const auto by_image = objects_by_image(scene);
    ProposalSet set;
    for (std::size_t i = 0; i < scene.image_ids.size(); ++i) {
        const auto& objs = by_image[i];
        for (int src = 0; src < kProposalSources; ++src) {
            const auto& cfg = sources[static_cast<std::size_t>(src)];
            Rng rng(derive_seed(seed, kProposalStream + static_cast<std::uint64_t>(src) * 16, i));
            std::size_t next_object = 0;
            for (int k = 0; k < cfg.count; ++k) {
                const bool random = objs.empty() || rng.uniform() < cfg.random_fraction;
                BoundingBox box = random ? random_box(rng, spec) : [&] {
                    const auto& o = scene.gt.objects[objs[next_object++ % objs.size()]];
                    return jitter_box(rng, o.box, cfg.jitter * o.box.width(), cfg.jitter * o.box.height(), spec);
                }();
                std::optional<double> confidence;
                if (src == static_cast<int>(ProposalSource::Ees)) {
                    double best = 0.0;
                    for (const auto k2 : objs) best = std::max(best, iou(box, scene.gt.objects[k2].box));
                    confidence = snap(std::clamp(best + rng.normal(0.0, cfg.confidence_noise), 0.0, 1.0));
                }
                set.add({scene.image_ids[i], static_cast<ProposalSource>(src), {box, confidence}});
            }
        }
    }
    return set;
}

namespace {

std::vector<double> per_class(const KeyValueFile& kv, const std::string& key, double fallback, std::size_t n) {
    if (!kv.contains(key)) return std::vector<double>(n, fallback);
    auto v = kv.get_doubles(key);
    if (v.size() == 1) return std::vector<double>(n, v[0]);
    if (v.size() != n) {
        throw DataError(kv.origin() + ": " + key + ": expected 1 or " + std::to_string(n) + " values, got " +
                        std::to_string(v.size()));
    }
    return v;
}

}  // namespace

SceneSpec parse_scene_spec(const KeyValueFile& kv, const Roster& classes) {
    SceneSpec s;
    s.canvas_width = kv.get_double("scene.canvas_width", s.canvas_width);
    s.canvas_height = kv.get_double("scene.canvas_height", s.canvas_height);
    s.objects_mean = kv.get_double("scene.objects_mean", s.objects_mean);
    s.min_size = kv.get_double("scene.min_size", s.min_size);
    s.max_size = kv.get_double("scene.max_size", s.max_size);
    s.max_object_iou = kv.get_double("scene.max_object_iou", s.max_object_iou);
    s.placement_retries = static_cast<int>(kv.get_int("scene.placement_retries", s.placement_retries));
    s.difficult_above = kv.get_double("scene.difficult_above", s.difficult_above);
    if (kv.contains("scene.class_weights")) {
        s.class_weights = per_class(kv, "scene.class_weights", 1.0, static_cast<std::size_t>(classes.size()));
    }
    return s;
}

DetectorProfile parse_detector_profile(const KeyValueFile& kv, const std::string& name, const Roster& classes) {
    const std::string p = "detector." + name + ".";
    const auto n = static_cast<std::size_t>(classes.size());
    DetectorProfile prof;
    const ClassProfile def;
    const auto skill = per_class(kv, p + "skill", def.skill, n);
    const auto sigma = per_class(kv, p + "sigma", def.sigma, n);
    const auto fp = per_class(kv, p + "fp_rate", def.fp_rate, n);
    const auto loc = per_class(kv, p + "loc_fp_rate", def.loc_fp_rate, n);
    for (std::size_t c = 0; c < n; ++c) prof.classes.push_back({skill[c], sigma[c], fp[c], loc[c]});
    prof.tp_base = kv.get_double(p + "tp_base", prof.tp_base);
    prof.tp_gain = kv.get_double(p + "tp_gain", prof.tp_gain);
    prof.tp_sd = kv.get_double(p + "tp_sd", prof.tp_sd);
    prof.fp_mean = kv.get_double(p + "fp_mean", prof.fp_mean);
    prof.fp_sd = kv.get_double(p + "fp_sd", prof.fp_sd);
    prof.score_scale = kv.get_double(p + "score_scale", prof.score_scale);
    prof.score_offset = kv.get_double(p + "score_offset", prof.score_offset);
    prof.independence = kv.get_double(p + "independence", prof.independence);
    validate_profile(prof, n);
    return prof;
}

std::array<ProposalSourceSpec, kProposalSources> parse_proposal_specs(const KeyValueFile& kv) {
    std::array<ProposalSourceSpec, kProposalSources> out{};
    for (int s = 0; s < kProposalSources; ++s) {
        std::string name(proposal_source_name(static_cast<ProposalSource>(s)));
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
        const std::string p = "proposals." + name + ".";
        auto& spec = out[static_cast<std::size_t>(s)];
        spec.count = static_cast<int>(kv.get_int(p + "count", spec.count));
        spec.jitter = kv.get_double(p + "jitter", spec.jitter);
        spec.random_fraction = kv.get_double(p + "random_fraction", spec.random_fraction);
        spec.confidence_noise = kv.get_double(p + "confidence_noise", spec.confidence_noise);
    }
    return out;
}

}  // namespace detfuse
