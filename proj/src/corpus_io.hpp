#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geometry.hpp"

namespace detfuse {

// Ordered name <-> id table. Rosters come from configuration and are never inferred
// from data, so feature dimensions are fixed before any file is read.
class Roster {
public:
    Roster() = default;
    explicit Roster(std::vector<std::string> names);

    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name(int id) const;
    std::optional<int> find(std::string_view name) const;
    int id(std::string_view name) const;  // throws DataError for unknown names
    const std::vector<std::string>& names() const { return names_; }

    // Parses "a,b,c".
    static Roster from_list(const std::string& comma_separated);
    std::string to_list() const;

private:
    std::vector<std::string> names_;
};

struct ImageGroup {
    std::string image_id;
    std::vector<std::size_t> indices;  // input order
};

// Detections of one fold in input order, indexed by image.
class DetectionCorpus {
public:
    DetectionCorpus() = default;
    DetectionCorpus(Roster detectors, Roster classes);

    // Validates roster ids and the calibrated-score range, then appends.
    void add(Detection d);
    void set_calibrated(std::size_t index, double value);

    std::size_t size() const { return detections_.size(); }
    bool empty() const { return detections_.empty(); }
    const Detection& operator[](std::size_t i) const { return detections_[i]; }
    const std::vector<Detection>& detections() const { return detections_; }
    const Roster& detectors() const { return detectors_; }
    const Roster& classes() const { return classes_; }

    // Images in first-appearance order; each detection appears in exactly one group.
    const std::vector<ImageGroup>& images() const { return images_; }

    // Keeps only the given detector, re-rostered as a single-detector corpus.
    DetectionCorpus restrict_to_detector(int detector_id) const;

private:
    Roster detectors_;
    Roster classes_;
    std::vector<Detection> detections_;
    std::vector<ImageGroup> images_;
    std::unordered_map<std::string, std::size_t> image_slot_;
};

struct GroundTruthSet {
    Roster classes;
    std::vector<GroundTruthObject> objects;
};

enum class ProposalSource { Obj = 0, Core = 1, Ees = 2 };
inline constexpr int kProposalSources = 3;
std::string_view proposal_source_name(ProposalSource s);
ProposalSource parse_proposal_source(std::string_view name);

struct Proposal {
    BoundingBox box;
    std::optional<double> confidence;  // present for EES only
};

struct ProposalRecord {
    std::string image_id;
    ProposalSource source;
    Proposal proposal;
};

struct ImageProposals {
    std::array<std::vector<Proposal>, kProposalSources> by_source;
};

class ProposalSet {
public:
    // Throws DataError when the confidence presence does not match the source.
    void add(ProposalRecord record);

    const std::vector<ProposalRecord>& records() const { return records_; }
    // Empty proposal lists for unknown images.
    const ImageProposals& image(const std::string& image_id) const;

private:
    std::vector<ProposalRecord> records_;
    std::unordered_map<std::string, ImageProposals> per_image_;
};

DetectionCorpus parse_detections(const std::string& text, const Roster& detectors,
                                 const Roster& classes, const std::string& origin = "<memory>");
DetectionCorpus load_detections(const std::filesystem::path& path, const Roster& detectors,
                                const Roster& classes);
std::string format_detection_record(const Detection& d, const Roster& detectors,
                                    const Roster& classes);
std::string format_detections(const DetectionCorpus& corpus);
void save_detections(const std::filesystem::path& path, const DetectionCorpus& corpus);

GroundTruthSet parse_ground_truth(const std::string& text, const Roster& classes,
                                  const std::string& origin = "<memory>");
GroundTruthSet load_ground_truth(const std::filesystem::path& path, const Roster& classes);
std::string format_ground_truth(const GroundTruthSet& gt);
void save_ground_truth(const std::filesystem::path& path, const GroundTruthSet& gt);

ProposalSet parse_proposals(const std::string& text, const std::string& origin = "<memory>");
ProposalSet load_proposals(const std::filesystem::path& path);
std::string format_proposals(const ProposalSet& proposals);
void save_proposals(const std::filesystem::path& path, const ProposalSet& proposals);

inline constexpr std::array<std::string_view, 4> kFoldNames = {"train", "val", "trainval", "test"};

struct FoldFiles {
    std::filesystem::path detections;
    std::filesystem::path ground_truth;
    std::filesystem::path proposals;
    // Fold the detector models that produced `detections` were trained on.
    std::string provenance;
};

struct SplitManifest {
    std::map<std::string, FoldFiles> folds;

    const FoldFiles& fold(const std::string& name) const;
};

// Reads `fold.<name>.<field> = value` lines; relative paths resolve against the manifest
// directory.
SplitManifest load_split_manifest(const std::filesystem::path& path);
std::string format_split_manifest(const SplitManifest& manifest);

// Checks that train, val and test are present and that no fold's detections were produced
// by a model trained on data overlapping that fold (trainval covers train and val).
// Throws DataError describing the violation.
SplitManifest assemble_split(const SplitManifest& manifest);

}  // namespace detfuse
