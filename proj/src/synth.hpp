#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "corpus_io.hpp"
#include "kvfile.hpp"

namespace detfuse {

struct SceneSpec {
    double canvas_width = 500.0;
    double canvas_height = 375.0;
    double objects_mean = 3.0;          // per image; count is 1 + Poisson(mean - 1)
    double min_size = 0.12;             // box side range as a fraction of the canvas width
    double max_size = 0.45;
    double max_object_iou = 0.3;        // placement rejects boxes overlapping more than this
    int placement_retries = 200;
    double difficult_above = 0.97;      // latent above this marks the object difficult
    std::vector<double> class_weights;  // relative class frequency; empty = uniform
};

struct ClassProfile {
    double skill = 0.5;     // object detected iff skill > difficulty
    double sigma = 4.0;     // corner jitter in pixels
    double fp_rate = 1.0;   // Poisson mean of background FPs per image
    double loc_fp_rate = 0.0;  // Poisson mean of badly localized FPs near objects
};

struct DetectorProfile {
    std::vector<ClassProfile> classes;
    // TP score ~ N(tp_base + tp_gain * (1 - difficulty), tp_sd), FP score ~ N(fp_mean, fp_sd),
    // both clipped to [0, 1], then raw = score_offset + score_scale * s.
    double tp_base = 0.45;
    double tp_gain = 0.35;
    double tp_sd = 0.15;
    double fp_mean = 0.35;
    double fp_sd = 0.15;
    double score_scale = 1.0;
    double score_offset = 0.0;
    // Blend of the shared difficulty latent with a private per-detector draw; 0 keeps the
    // shared latent only.
    double independence = 0.0;
};

struct ProposalSourceSpec {
    int count = 50;                // proposals per image
    double jitter = 0.1;           // corner noise as a fraction of box size
    double random_fraction = 0.5;  // share of uniformly random boxes
    double confidence_noise = 0.1; // EES only
};

struct SyntheticScene {
    GroundTruthSet gt;
    std::vector<std::string> image_ids;  // canonical order
    std::vector<double> latent;          // difficulty per object, aligned with gt.objects
};

// Images are named <prefix>_<index, zero padded>. Throws DataError for n_images < 1 or when
// an object cannot be placed within the retry budget.
SyntheticScene generate_ground_truth(const SceneSpec& spec, const Roster& classes, int n_images,
                                     std::uint64_t seed, const std::string& prefix = "img");

// Lines: image, class, four box coordinates, latent.
std::string format_latent_sidecar(const SyntheticScene& scene);

// Detections of one detector (given id in `detectors`) in image order.
DetectionCorpus simulate_detector(const SyntheticScene& scene, const SceneSpec& spec, const DetectorProfile& profile,
                                  const Roster& detectors, int detector_id, std::uint64_t seed);

// All detectors, image by image; detector j uses seed stream j.
DetectionCorpus simulate_detectors(const SyntheticScene& scene, const SceneSpec& spec,
                                   const std::vector<DetectorProfile>& profiles, const Roster& detectors,
                                   std::uint64_t seed);

ProposalSet simulate_proposals(const SyntheticScene& scene, const SceneSpec& spec,
                               const std::array<ProposalSourceSpec, kProposalSources>& sources,
                               std::uint64_t seed);

// Scenario keys (see scenarios/standard.scenario):
//   scene.*                      SceneSpec fields
//   detector.<name>.<field>      per-class lists (skill, sigma, fp_rate, loc_fp_rate) with a
//                                single value broadcast to all classes, or scalars
//   proposals.<obj|core|ees>.*   ProposalSourceSpec fields
SceneSpec parse_scene_spec(const KeyValueFile& kv, const Roster& classes);
DetectorProfile parse_detector_profile(const KeyValueFile& kv, const std::string& name, const Roster& classes);
std::array<ProposalSourceSpec, kProposalSources> parse_proposal_specs(const KeyValueFile& kv);

}  // namespace detfuse
