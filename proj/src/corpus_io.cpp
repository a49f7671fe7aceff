#include "corpus_io.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "error.hpp"
#include "kvfile.hpp"

namespace detfuse {

Roster::Roster(std::vector<std::string> names) : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (n.empty()) throw DataError("roster contains an empty name");
        if (n.find('\t') != std::string::npos || n.find(',') != std::string::npos) {
            throw DataError("roster name '" + n + "' contains a separator character");
        }
        if (!seen.insert(n).second) throw DataError("roster contains duplicate name '" + n + "'");
    }
}

const std::string& Roster::name(int id) const {
    if (id < 0 || id >= size()) throw DataError("roster id " + std::to_string(id) + " out of range");
    return names_[static_cast<std::size_t>(id)];
}

std::optional<int> Roster::find(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<int>(it - names_.begin());
}

int Roster::id(std::string_view name) const {
    if (const auto v = find(name)) return *v;
    throw DataError("unknown name '" + std::string(name) + "'");
}

Roster Roster::from_list(const std::string& comma_separated) {
    std::vector<std::string> names;
    for (const auto& part : split(comma_separated, ',')) {
        const std::string t = trim(part);
        if (!t.empty()) names.push_back(t);
    }
    return Roster(std::move(names));
}

std::string Roster::to_list() const {
    std::string out;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (i) out += ',';
        out += names_[i];
    }
    return out;
}

DetectionCorpus::DetectionCorpus(Roster detectors, Roster classes)
    : detectors_(std::move(detectors)), classes_(std::move(classes)) {}

void DetectionCorpus::add(Detection d) {
    if (d.detector_id < 0 || d.detector_id >= detectors_.size()) {
        throw DataError("detection detector id " + std::to_string(d.detector_id) +
                        " outside roster of " + std::to_string(detectors_.size()));
    }
    if (d.class_id < 0 || d.class_id >= classes_.size()) {
        throw DataError("detection class id " + std::to_string(d.class_id) + " outside roster of " +
                        std::to_string(classes_.size()));
    }
    if (d.calibrated_score && !(*d.calibrated_score > 0.0 && *d.calibrated_score < 1.0)) {
        throw DataError("calibrated score must lie strictly inside (0, 1)");
    }
    const std::size_t index = detections_.size();
    auto [it, inserted] = image_slot_.try_emplace(d.image_id, images_.size());
    if (inserted) images_.push_back(ImageGroup{d.image_id, {}});
    images_[it->second].indices.push_back(index);
    detections_.push_back(std::move(d));
}

void DetectionCorpus::set_calibrated(std::size_t index, double value) {
    if (!(value > 0.0 && value < 1.0)) {
        throw DataError("calibrated score must lie strictly inside (0, 1)");
    }
    detections_.at(index).calibrated_score = value;
}

DetectionCorpus DetectionCorpus::restrict_to_detector(int detector_id) const {
    DetectionCorpus out(Roster({detectors_.name(detector_id)}), classes_);
    for (const auto& d : detections_) {
        if (d.detector_id != detector_id) continue;
        Detection copy = d;
        copy.detector_id = 0;
        out.add(std::move(copy));
    }
    return out;
}

std::string_view proposal_source_name(ProposalSource s) {
    switch (s) {
        case ProposalSource::Obj: return "OBJ";
        case ProposalSource::Core: return "CORE";
        case ProposalSource::Ees: return "EES";
    }
    return "?";
}

ProposalSource parse_proposal_source(std::string_view name) {
    if (name == "OBJ") return ProposalSource::Obj;
    if (name == "CORE") return ProposalSource::Core;
    if (name == "EES") return ProposalSource::Ees;
    throw DataError("unknown proposal source '" + std::string(name) + "'");
}

void ProposalSet::add(ProposalRecord record) {
    const bool is_ees = record.source == ProposalSource::Ees;
    if (is_ees != record.proposal.confidence.has_value()) {
        throw DataError(is_ees ? "EES proposal without confidence"
                               : "OBJ/CORE proposal must not carry a confidence");
    }
    per_image_[record.image_id].by_source[static_cast<std::size_t>(record.source)].push_back(
        record.proposal);
    records_.push_back(std::move(record));
}

const ImageProposals& ProposalSet::image(const std::string& image_id) const {
    static const ImageProposals kEmpty{};
    const auto it = per_image_.find(image_id);
    return it == per_image_.end() ? kEmpty : it->second;
}

namespace {

// Calls fn(fields, line_no) for every non-blank line; wraps errors with origin:line.
template <typename Fn>
void for_each_record(const std::string& text, const std::string& origin, std::size_t n_fields,
                     Fn&& fn) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        auto fields = split(line, '\t');
        if (fields.size() != n_fields) {
            throw DataError(where + ": expected " + std::to_string(n_fields) + " tab-separated fields, got " +
                            std::to_string(fields.size()));
        }
        try {
            fn(fields, where);
        } catch (const DataError& e) {
            const std::string msg = e.what();
            if (msg.rfind(where, 0) == 0) throw;
            throw DataError(where + ": " + msg);
        }
    }
}

BoundingBox parse_box(const std::vector<std::string>& f, std::size_t first, const std::string& where) {
    return BoundingBox(parse_double(f[first], where + " x_min"), parse_double(f[first + 1], where + " y_min"),
                       parse_double(f[first + 2], where + " x_max"),
                       parse_double(f[first + 3], where + " y_max"));
}

std::string format_box(const BoundingBox& b) {
    return format_fixed6(b.x_min()) + '\t' + format_fixed6(b.y_min()) + '\t' + format_fixed6(b.x_max()) +
           '\t' + format_fixed6(b.y_max());
}

void require_image_id(const std::string& id) {
    if (trim(id).empty() || trim(id) != id) throw DataError("empty or padded image id");
}

}  // namespace

DetectionCorpus parse_detections(const std::string& text, const Roster& detectors,
                                 const Roster& classes, const std::string& origin) {
    DetectionCorpus corpus(detectors, classes);
    for_each_record(text, origin, 8, [&](const std::vector<std::string>& f, const std::string& where) {
        require_image_id(f[0]);
        Detection d{
            .image_id = f[0],
            .class_id = classes.id(f[1]),
            .detector_id = detectors.id(f[2]),
            .box = parse_box(f, 3, where),
            .raw_score = parse_double(f[7], where + " raw_score"),
            .calibrated_score = std::nullopt,
        };
        corpus.add(std::move(d));
    });
    return corpus;
}

DetectionCorpus load_detections(const std::filesystem::path& path, const Roster& detectors,
                                const Roster& classes) {
    return parse_detections(read_file(path), detectors, classes, path.string());
}

std::string format_detection_record(const Detection& d, const Roster& detectors,
                                    const Roster& classes) {
    return d.image_id + '\t' + classes.name(d.class_id) + '\t' + detectors.name(d.detector_id) + '\t' +
           format_box(d.box) + '\t' + format_fixed6(d.raw_score);
}

std::string format_detections(const DetectionCorpus& corpus) {
    std::string out;
    for (const auto& d : corpus.detections()) {
        out += format_detection_record(d, corpus.detectors(), corpus.classes());
        out += '\n';
    }
    return out;
}

void save_detections(const std::filesystem::path& path, const DetectionCorpus& corpus) {
    write_file(path, format_detections(corpus));
}

GroundTruthSet parse_ground_truth(const std::string& text, const Roster& classes,
                                  const std::string& origin) {
    GroundTruthSet gt{classes, {}};
    for_each_record(text, origin, 7, [&](const std::vector<std::string>& f, const std::string& where) {
        require_image_id(f[0]);
        const std::string flag = trim(f[6]);
        if (flag != "0" && flag != "1") throw DataError(where + ": difficult flag must be 0 or 1");
        gt.objects.push_back(GroundTruthObject{
            .image_id = f[0],
            .class_id = classes.id(f[1]),
            .box = parse_box(f, 2, where),
            .difficult = flag == "1",
        });
    });
    return gt;
}

GroundTruthSet load_ground_truth(const std::filesystem::path& path, const Roster& classes) {
    return parse_ground_truth(read_file(path), classes, path.string());
}

std::string format_ground_truth(const GroundTruthSet& gt) {
    std::string out;
    for (const auto& g : gt.objects) {
        out += g.image_id + '\t' + gt.classes.name(g.class_id) + '\t' + format_box(g.box) + '\t' +
               (g.difficult ? "1" : "0") + '\n';
    }
    return out;
}

void save_ground_truth(const std::filesystem::path& path, const GroundTruthSet& gt) {
    write_file(path, format_ground_truth(gt));
}

ProposalSet parse_proposals(const std::string& text, const std::string& origin) {
    ProposalSet set;
    for_each_record(text, origin, 7, [&](const std::vector<std::string>& f, const std::string& where) {
        require_image_id(f[0]);
        std::optional<double> confidence;
        if (trim(f[6]) != "-") confidence = parse_double(f[6], where + " confidence");
        set.add(ProposalRecord{f[0], parse_proposal_source(f[1]), Proposal{parse_box(f, 2, where), confidence}});
    });
    return set;
}

ProposalSet load_proposals(const std::filesystem::path& path) {
    return parse_proposals(read_file(path), path.string());
}

std::string format_proposals(const ProposalSet& proposals) {
    std::string out;
    for (const auto& r : proposals.records()) {
        out += r.image_id + '\t' + std::string(proposal_source_name(r.source)) + '\t' +
               format_box(r.proposal.box) + '\t' +
               (r.proposal.confidence ? format_fixed6(*r.proposal.confidence) : std::string("-")) + '\n';
    }
    return out;
}

void save_proposals(const std::filesystem::path& path, const ProposalSet& proposals) {
    write_file(path, format_proposals(proposals));
}

const FoldFiles& SplitManifest::fold(const std::string& name) const {
    const auto it = folds.find(name);
    if (it == folds.end()) throw DataError("split manifest has no fold '" + name + "'");
    return it->second;
}

SplitManifest load_split_manifest(const std::filesystem::path& path) {
    const auto kv = KeyValueFile::load(path);
    const auto base = path.parent_path();
    SplitManifest m;
    for (const auto& [key, value] : kv.values()) {
        const auto parts = split(key, '.');
        if (parts.size() != 3 || parts[0] != "fold") {
            throw DataError(path.string() + ": unexpected manifest key '" + key + "'");
        }
        if (std::find(kFoldNames.begin(), kFoldNames.end(), parts[1]) == kFoldNames.end()) {
            throw DataError(path.string() + ": unknown fold '" + parts[1] + "'");
        }
        FoldFiles& f = m.folds[parts[1]];
        const auto resolve = [&](const std::string& v) {
            std::filesystem::path p(v);
            return p.is_absolute() ? p : base / p;
        };
        if (parts[2] == "detections") f.detections = resolve(value);
        else if (parts[2] == "ground_truth") f.ground_truth = resolve(value);
        else if (parts[2] == "proposals") f.proposals = resolve(value);
        else if (parts[2] == "provenance") f.provenance = value;
        else throw DataError(path.string() + ": unknown fold field '" + parts[2] + "'");
    }
    return m;
}

std::string format_split_manifest(const SplitManifest& manifest) {
    std::string out;
    for (const auto& [name, f] : manifest.folds) {
        out += "fold." + name + ".detections = " + f.detections.generic_string() + "\n";
        out += "fold." + name + ".ground_truth = " + f.ground_truth.generic_string() + "\n";
        out += "fold." + name + ".proposals = " + f.proposals.generic_string() + "\n";
        out += "fold." + name + ".provenance = " + f.provenance + "\n";
    }
    return out;
}

namespace {

std::set<std::string> fold_members(const std::string& fold) {
    if (fold == "trainval") return {"train", "val"};
    return {fold};
}

}  // namespace

SplitManifest assemble_split(const SplitManifest& manifest) {
    for (const char* required : {"train", "val", "test"}) {
        if (!manifest.folds.count(required)) {
            throw DataError(std::string("split manifest is missing fold '") + required + "'");
        }
    }
    for (const auto& [name, files] : manifest.folds) {
        if (files.detections.empty()) continue;
        if (files.provenance.empty()) {
            throw DataError("fold '" + name + "' detections carry no provenance tag");
        }
        if (std::find(kFoldNames.begin(), kFoldNames.end(), files.provenance) == kFoldNames.end()) {
            throw DataError("fold '" + name + "' has unknown provenance '" + files.provenance + "'");
        }
        const auto own = fold_members(name);
        for (const auto& m : fold_members(files.provenance)) {
            if (own.count(m)) {
                throw DataError("cross-fold violation: detections for fold '" + name +
                                "' were produced by detector models trained on '" + files.provenance +
                                "', which overlaps the fold itself; context models would overfit");
            }
        }
    }
    return manifest;
}

}  // namespace detfuse
