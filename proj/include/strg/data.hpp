#pragma once

// Dataset ingestion and synthesis.
//
// The synthetic generator emits videos whose class is a relational motion
// pattern between two actor tracks moving among distractor tracks:
//
//   approach     actors start far apart and end overlapping
//   recede       actors start overlapping and drift far apart
//   cyclic_swap  actors exchange positions along arcs that never overlap
//   still_pair   actors hold their separation
//
// Per-node features carry a per-track appearance embedding plus per-frame
// noise and a short "interaction state" burst: in the three interaction
// classes both actors shift along one shared random direction for K frames;
// in still_pair each actor shifts along its own independent direction for the
// same K frames. Every video therefore has exactly 2 tracks x K frames of
// shifted nodes, so per-node feature distributions are identical across
// classes; the class is only recoverable from box geometry (spatio-temporal
// graphs) plus the pairing structure of the shifts (similarity graph).
//
// Box trajectories alone determine the label; classify_by_trajectory is the
// rule-based oracle the generator checks itself against.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "strg/graphs.hpp"
#include "strg/model.hpp"
#include "strg/regions.hpp"

namespace strg {

struct VideoRecord {
    std::string video_id;
    std::vector<RegionProposal> proposals;
    std::optional<Vector> global_feature;
    int label = -1;              // single-label class index
    std::vector<int> multi_hot;  // multi-label targets (empty in single-label data)
    std::optional<FeatureVolume> volume;
};

enum class SynthClass { approach, recede, cyclic_swap, still_pair };

inline const char* synth_class_name(SynthClass c) {
    switch (c) {
        case SynthClass::approach: return "approach";
        case SynthClass::recede: return "recede";
        case SynthClass::cyclic_swap: return "cyclic_swap";
        case SynthClass::still_pair: return "static";
    }
    return "?";
}

enum class RegionLayout { uniform, class_quadrants, shuffled_quadrants };

struct SynthSpec {
    std::size_t num_videos = 400;
    std::size_t frames = 16;
    std::size_t proposals_per_frame = 10;
    std::size_t d = 64;
    std::vector<SynthClass> classes{SynthClass::approach, SynthClass::recede,
                                    SynthClass::cyclic_swap, SynthClass::still_pair};
    double noise_std = 0.1;
    std::uint64_t seed = 0;

    double canvas = 128.0;       // feature-map coordinate extent
    double box_size = 12.0;      // actor/distractor box side
    double state_strength = 1.25;
    RegionLayout layout = RegionLayout::uniform;
    bool multi_label = false;    // adds an extra "interaction" attribute class
    std::string id_prefix = "vid";

    void validate() const {
        if (num_videos == 0 || frames < 2 || d == 0 || classes.empty())
            throw DataError("synth spec: counts must be positive (videos=" +
                            std::to_string(num_videos) + ", frames=" + std::to_string(frames) +
                            ", d=" + std::to_string(d) + ")");
        if (proposals_per_frame < 2)
            throw DataError("synth spec: needs at least 2 proposals per frame for the actor pair");
        if (!(noise_std >= 0.0) || !(canvas > 4.0 * box_size))
            throw DataError("synth spec: invalid noise/canvas/box values");
    }
};

namespace detail {

inline std::uint64_t synth_seed(std::uint64_t base, std::uint64_t video, std::uint64_t salt) {
    std::uint64_t z = base ^ (0x9e3779b97f4a7c15ULL * (video + 1)) ^ (salt << 32);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Vector random_unit(std::mt19937_64& rng, std::size_t d) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(d);
    double norm2 = 0.0;
    for (double& x : v) {
        x = gauss(rng);
        norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    for (double& x : v) x *= inv;
    return v;
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline BoundingBox centered_box(Point c, double side, double canvas) {
    const double h = side / 2.0;
    const double cx = std::clamp(c.x, h, canvas - h);
    const double cy = std::clamp(c.y, h, canvas - h);
    return {cx - h, cy - h, cx + h, cy + h};
}

}  // namespace detail

/// The rule-based oracle: recovers the class from the two actor tracks' raw
/// box trajectories. Endpoint exchange marks cyclic_swap; otherwise the
/// start/end distance ratio separates approach, recede and static.
inline SynthClass classify_by_trajectory(const VideoRecord& rec) {
    std::map<int, detail::Point> c0, c1;
    double side = 0.0;
    for (const auto& p : rec.proposals) {
        if (p.source_id != "actor0" && p.source_id != "actor1") continue;
        detail::Point c{(p.box.x1 + p.box.x2) / 2.0, (p.box.y1 + p.box.y2) / 2.0};
        (p.source_id == "actor0" ? c0 : c1)[p.frame] = c;
        side = std::max(side, p.box.width());
    }
    if (c0.empty() || c1.empty())
        throw DataError("classify_by_trajectory: video '" + rec.video_id + "' has no actor tracks");
    auto dist = [](detail::Point a, detail::Point b) {
        return std::hypot(a.x - b.x, a.y - b.y);
    };
    const auto first0 = c0.begin()->second, last0 = c0.rbegin()->second;
    const auto first1 = c1.begin()->second, last1 = c1.rbegin()->second;
    const double swap_tol = side / 2.0;
    if (dist(last0, first1) < swap_tol && dist(last1, first0) < swap_tol)
        return SynthClass::cyclic_swap;
    const double d_start = dist(first0, first1);
    const double d_end = dist(last0, last1);
    if (d_end < 0.5 * d_start) return SynthClass::approach;
    if (d_end > 2.0 * d_start) return SynthClass::recede;
    return SynthClass::still_pair;
}

/// Deterministic synthetic dataset. Classes are assigned round-robin, so any
/// count divisible by the class count is exactly balanced.
inline std::vector<VideoRecord> synth_generate(const SynthSpec& spec) {
    spec.validate();
    const double unit = spec.box_size / 12.0;
    const std::size_t T = spec.frames;
    const std::size_t n_classes = spec.classes.size();
    const std::size_t state_frames = std::max<std::size_t>(2, T / 5);

    // class -> quadrant assignment for the position-leakage option
    std::vector<std::size_t> quadrant(n_classes);
    for (std::size_t i = 0; i < n_classes; ++i) quadrant[i] = i % 4;
    if (spec.layout == RegionLayout::shuffled_quadrants) {
        std::mt19937_64 qrng(detail::synth_seed(spec.seed, 0, 77));
        std::shuffle(quadrant.begin(), quadrant.end(), qrng);
    }

    std::vector<VideoRecord> out;
    out.reserve(spec.num_videos);
    for (std::size_t v = 0; v < spec.num_videos; ++v) {
        const std::size_t class_pos = v % n_classes;
        const SynthClass cls = spec.classes[class_pos];
        std::mt19937_64 rng(detail::synth_seed(spec.seed, v, 1));
        std::normal_distribution<double> jitter(0.0, 0.35 * unit);
        std::normal_distribution<double> feat_noise(0.0, spec.noise_std);
        std::uniform_real_distribution<double> uni(0.0, 1.0);

        // trajectory midpoint
        detail::Point mid;
        const double margin = (19.0 + 6.0) * unit;  // max actor extent + half box
        if (spec.layout == RegionLayout::uniform) {
            mid.x = margin + uni(rng) * (spec.canvas - 2.0 * margin);
            mid.y = margin + uni(rng) * (spec.canvas - 2.0 * margin);
        } else {
            const std::size_t q = quadrant[class_pos];
            mid.x = spec.canvas * (q % 2 == 0 ? 0.25 : 0.75) + (uni(rng) * 2.0 - 1.0) * unit;
            mid.y = spec.canvas * (q / 2 == 0 ? 0.25 : 0.75) + (uni(rng) * 2.0 - 1.0) * unit;
        }
        const double theta = uni(rng) * 2.0 * std::numbers::pi;
        const detail::Point axis{std::cos(theta), std::sin(theta)};
        const detail::Point perp{-axis.y, axis.x};

        const double far_sep = 36.0 * unit;
        const double near_sep = 4.0 * unit;
        const double swap_sep = 24.0 * unit;
        const double swap_arc = 14.0 * unit;
        const double hold_sep = 30.0 * unit;

        auto actor_centers = [&](std::size_t t) -> std::pair<detail::Point, detail::Point> {
            const double tau = static_cast<double>(t) / static_cast<double>(T - 1);
            double along = 0.0, arc = 0.0;
            switch (cls) {
                case SynthClass::approach: along = (far_sep - (far_sep - near_sep) * tau) / 2.0; break;
                case SynthClass::recede: along = (near_sep + (far_sep - near_sep) * tau) / 2.0; break;
                case SynthClass::cyclic_swap:
                    along = swap_sep / 2.0 - swap_sep * tau;
                    arc = swap_arc * std::sin(std::numbers::pi * tau);
                    break;
                case SynthClass::still_pair: along = hold_sep / 2.0; break;
            }
            detail::Point a{mid.x + along * axis.x + arc * perp.x,
                            mid.y + along * axis.y + arc * perp.y};
            detail::Point b{mid.x - along * axis.x - arc * perp.x,
                            mid.y - along * axis.y - arc * perp.y};
            return {a, b};
        };

        // appearance identities, one per track
        const std::size_t n_tracks = spec.proposals_per_frame;
        std::vector<Vector> identity;
        identity.reserve(n_tracks);
        for (std::size_t k = 0; k < n_tracks; ++k) identity.push_back(detail::random_unit(rng, spec.d));

        // interaction state directions: shared for the interaction classes,
        // independent for the static pair
        const Vector shared_dir = detail::random_unit(rng, spec.d);
        const Vector lone_dir = detail::random_unit(rng, spec.d);
        const bool interacting = cls != SynthClass::still_pair;
        const Vector& state0 = shared_dir;
        const Vector& state1 = interacting ? shared_dir : lone_dir;

        std::size_t state_begin = 0;
        switch (cls) {
            case SynthClass::approach: state_begin = T - state_frames; break;
            case SynthClass::recede: state_begin = 0; break;
            case SynthClass::cyclic_swap:
            case SynthClass::still_pair: state_begin = (T - state_frames) / 2; break;
        }

        // distractor tracks: clamped random walks
        std::vector<detail::Point> walkers(n_tracks - 2);
        for (auto& w : walkers) {
            w.x = uni(rng) * spec.canvas;
            w.y = uni(rng) * spec.canvas;
        }

        VideoRecord rec;
        rec.video_id = spec.id_prefix + std::to_string(v);
        rec.label = static_cast<int>(class_pos);
        if (spec.multi_label) {
            rec.multi_hot.assign(n_classes + 1, 0);
            rec.multi_hot[class_pos] = 1;
            rec.multi_hot[n_classes] = interacting ? 1 : 0;
        }
        rec.proposals.reserve(T * n_tracks);

        auto emit = [&](int frame, std::size_t track, const BoundingBox& box, const Vector* state) {
            RegionProposal p;
            p.frame = frame;
            p.box = box;
            p.source_id = (track < 2 ? "actor" + std::to_string(track)
                                     : "distractor" + std::to_string(track));
            p.feature = identity[track];
            if (state)
                for (std::size_t i = 0; i < spec.d; ++i)
                    p.feature[i] += spec.state_strength * (*state)[i];
            for (double& f : p.feature) f += feat_noise(rng);
            rec.proposals.push_back(std::move(p));
        };

        for (std::size_t t = 0; t < T; ++t) {
            auto [a, b] = actor_centers(t);
            a.x += jitter(rng);
            a.y += jitter(rng);
            b.x += jitter(rng);
            b.y += jitter(rng);
            const bool in_state = t >= state_begin && t < state_begin + state_frames;
            emit(static_cast<int>(t), 0, detail::centered_box(a, spec.box_size, spec.canvas),
                 in_state ? &state0 : nullptr);
            emit(static_cast<int>(t), 1, detail::centered_box(b, spec.box_size, spec.canvas),
                 in_state ? &state1 : nullptr);
            for (std::size_t k = 0; k < walkers.size(); ++k) {
                if (t > 0) {
                    walkers[k].x += (uni(rng) * 2.0 - 1.0) * 2.5 * unit;
                    walkers[k].y += (uni(rng) * 2.0 - 1.0) * 2.5 * unit;
                }
                emit(static_cast<int>(t), k + 2,
                     detail::centered_box(walkers[k], spec.box_size, spec.canvas), nullptr);
            }
        }

        // the generator cross-checks itself against the trajectory rule
        const SynthClass recovered = classify_by_trajectory(rec);
        if (recovered != cls)
            throw NumericError("synth_generate: video '" + rec.video_id +
                               "' not recoverable by the trajectory rule (made " +
                               std::string(synth_class_name(cls)) + ", recovered " +
                               synth_class_name(recovered) + ")");
        out.push_back(std::move(rec));
    }
    return out;
}

/// Assembles one record into model input: canonical node order, all three
/// adjacencies, and the global feature (explicit record feature if present,
/// else the volume mean, else the mean of the node features).
inline VideoGraphInput assemble(const VideoRecord& rec, const AffinityTransforms& transforms) {
    if (rec.proposals.empty())
        throw DataError("assemble: video '" + rec.video_id + "' has no proposals");
    const std::vector<RegionProposal> ordered = canonical_order(rec.proposals);
    const std::size_t n = ordered.size();
    const std::size_t d = ordered.front().feature.size();
    VideoGraphInput in;
    in.node_features = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (ordered[i].feature.size() != d)
            throw DataError("assemble: video '" + rec.video_id + "' mixes feature widths " +
                            std::to_string(d) + " and " + std::to_string(ordered[i].feature.size()));
        for (std::size_t j = 0; j < d; ++j) in.node_features(i, j) = ordered[i].feature[j];
    }
    in.g_sim = build_similarity_graph(in.node_features, transforms);
    in.g_front = build_front_graph(ordered);
    in.g_back = build_back_graph(ordered);
    if (rec.global_feature) {
        if (rec.global_feature->size() != d)
            throw DataError("assemble: video '" + rec.video_id + "' global feature width " +
                            std::to_string(rec.global_feature->size()) + " vs d=" + std::to_string(d));
        in.global_feature = *rec.global_feature;
    } else if (rec.volume) {
        in.global_feature = rec.volume->global_mean();
    } else {
        in.global_feature = mean_rows(in.node_features);
    }
    return in;
}

// ---------------------------------------------------------------------------
// Dataset files. A dataset directory holds:
//   proposals.ndjson | proposals.bin   one object proposal per line/record
//   labels.ndjson                      one label per video
//   globals.ndjson                     optional explicit global features
// ---------------------------------------------------------------------------

enum class FileFormat { ndjson, bin };

inline const char* file_format_name(FileFormat f) { return f == FileFormat::ndjson ? "ndjson" : "bin"; }

struct LoadResult {
    std::vector<VideoRecord> records;
    std::vector<std::string> warnings;
};

namespace detail {

constexpr char kPropMagic[9] = "STRGDATA";

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
inline double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
inline std::string read_str(std::istream& is) {
    const std::uint32_t len = read_u32(is);
    if (len > (1u << 20)) throw DataError("binary dataset: implausible string length");
    std::string s(len, '\0');
    is.read(s.data(), len);
    return s;
}

}  // namespace detail

/// Writes proposals (ndjson or packed binary), labels and, when present,
/// explicit global features into `dir`.
inline void save_dataset(const std::vector<VideoRecord>& records,
                         const std::filesystem::path& dir, FileFormat format) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    using nlohmann::json;

    if (format == FileFormat::ndjson) {
        std::ofstream os(dir / "proposals.ndjson");
        if (!os) throw DataError("save_dataset: cannot write " + (dir / "proposals.ndjson").string());
        for (const auto& rec : records)
            for (const auto& p : rec.proposals) {
                json j{{"video_id", rec.video_id},
                       {"frame", p.frame},
                       {"box", {p.box.x1, p.box.y1, p.box.x2, p.box.y2}},
                       {"feature", p.feature},
                       {"source_id", p.source_id}};
                os << j.dump() << '\n';
            }
    } else {
        static_assert(std::endian::native == std::endian::little,
                      "packed binary layout is little-endian");
        std::ofstream os(dir / "proposals.bin", std::ios::binary);
        if (!os) throw DataError("save_dataset: cannot write " + (dir / "proposals.bin").string());
        std::uint64_t count = 0;
        std::uint32_t d = 0;
        for (const auto& rec : records) {
            count += rec.proposals.size();
            for (const auto& p : rec.proposals) d = static_cast<std::uint32_t>(p.feature.size());
        }
        os.write(detail::kPropMagic, 8);
        detail::write_u32(os, 1);  // version
        detail::write_u32(os, d);
        detail::write_u64(os, count);
        for (const auto& rec : records)
            for (const auto& p : rec.proposals) {
                detail::write_str(os, rec.video_id);
                detail::write_str(os, p.source_id);
                detail::write_u32(os, static_cast<std::uint32_t>(p.frame));
                detail::write_f64(os, p.box.x1);
                detail::write_f64(os, p.box.y1);
                detail::write_f64(os, p.box.x2);
                detail::write_f64(os, p.box.y2);
                for (double f : p.feature) detail::write_f64(os, f);
            }
    }

    {
        std::ofstream os(dir / "labels.ndjson");
        if (!os) throw DataError("save_dataset: cannot write " + (dir / "labels.ndjson").string());
        for (const auto& rec : records) {
            json j{{"video_id", rec.video_id}};
            if (!rec.multi_hot.empty()) j["multi_hot"] = rec.multi_hot;
            else j["label"] = rec.label;
            os << j.dump() << '\n';
        }
    }

    bool any_global = false;
    for (const auto& rec : records) any_global |= rec.global_feature.has_value();
    if (any_global) {
        std::ofstream os(dir / "globals.ndjson");
        for (const auto& rec : records)
            if (rec.global_feature) {
                json j{{"video_id", rec.video_id}, {"feature", *rec.global_feature}};
                os << j.dump() << '\n';
            }
    }
}

/// Loads and validates a dataset directory. Feature width is inferred from
/// the first proposal and enforced uniform; malformed rows report their
/// line/record number; records come back sorted by video_id.
inline LoadResult load_dataset(const std::filesystem::path& dir, FileFormat format) {
    namespace fs = std::filesystem;
    using nlohmann::json;
    LoadResult out;

    struct PendingVideo {
        std::vector<RegionProposal> proposals;
    };
    std::map<std::string, PendingVideo> videos;
    std::size_t d = 0;

    auto take_proposal = [&](const std::string& video_id, RegionProposal&& p,
                             const std::string& locus) {
        if (p.feature.empty()) throw DataError("load_dataset: empty feature at " + locus);
        if (d == 0) d = p.feature.size();
        if (p.feature.size() != d)
            throw DataError("load_dataset: feature width " + std::to_string(p.feature.size()) +
                            " vs dataset width " + std::to_string(d) + " at " + locus);
        for (double f : p.feature)
            if (!std::isfinite(f)) throw DataError("load_dataset: non-finite feature at " + locus);
        if (!p.box.valid()) throw DataError("load_dataset: invalid box at " + locus);
        if (p.frame < 0) throw DataError("load_dataset: negative frame at " + locus);
        videos[video_id].proposals.push_back(std::move(p));
    };

    const fs::path prop_path = dir / (format == FileFormat::ndjson ? "proposals.ndjson" : "proposals.bin");
    if (format == FileFormat::ndjson) {
        std::ifstream is(prop_path);
        if (!is) throw DataError("load_dataset: cannot open " + prop_path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::string locus = prop_path.filename().string() + ":" + std::to_string(line_no);
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw DataError("load_dataset: bad JSON at " + locus + ": " + e.what());
            }
            try {
                RegionProposal p;
                p.frame = j.at("frame").get<int>();
                const auto& b = j.at("box");
                if (!b.is_array() || b.size() != 4)
                    throw DataError("box must be [x1,y1,x2,y2]");
                p.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                         b[3].get<double>()};
                p.feature = j.at("feature").get<Vector>();
                p.source_id = j.value("source_id", "");
                take_proposal(j.at("video_id").get<std::string>(), std::move(p), locus);
            } catch (const json::exception& e) {
                throw DataError("load_dataset: bad record at " + locus + ": " + e.what());
            }
        }
        if (line_no == 0)
            out.warnings.push_back("proposals file " + prop_path.string() + " is empty");
    } else {
        std::ifstream is(prop_path, std::ios::binary);
        if (!is) throw DataError("load_dataset: cannot open " + prop_path.string());
        char magic[8] = {};
        is.read(magic, 8);
        if (std::string(magic, 8) != std::string(detail::kPropMagic, 8))
            throw DataError("load_dataset: bad magic in " + prop_path.string());
        const std::uint32_t version = detail::read_u32(is);
        if (version != 1)
            throw DataError("load_dataset: unsupported version " + std::to_string(version));
        const std::uint32_t file_d = detail::read_u32(is);
        const std::uint64_t count = detail::read_u64(is);
        for (std::uint64_t r = 0; r < count; ++r) {
            const std::string locus = prop_path.filename().string() + ": record " + std::to_string(r);
            const std::string video_id = detail::read_str(is);
            RegionProposal p;
            p.source_id = detail::read_str(is);
            p.frame = static_cast<int>(detail::read_u32(is));
            p.box.x1 = detail::read_f64(is);
            p.box.y1 = detail::read_f64(is);
            p.box.x2 = detail::read_f64(is);
            p.box.y2 = detail::read_f64(is);
            p.feature.resize(file_d);
            for (auto& f : p.feature) f = detail::read_f64(is);
            if (!is) throw DataError("load_dataset: truncated file at " + locus);
            take_proposal(video_id, std::move(p), locus);
        }
        if (count == 0)
            out.warnings.push_back("proposals file " + prop_path.string() + " is empty");
    }

    // labels
    std::map<std::string, std::pair<int, std::vector<int>>> labels;
    {
        const fs::path label_path = dir / "labels.ndjson";
        std::ifstream is(label_path);
        if (!is) throw DataError("load_dataset: cannot open " + label_path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::string locus = "labels.ndjson:" + std::to_string(line_no);
            try {
                json j = json::parse(line);
                const std::string id = j.at("video_id").get<std::string>();
                if (j.contains("multi_hot"))
                    labels[id] = {-1, j["multi_hot"].get<std::vector<int>>()};
                else
                    labels[id] = {j.at("label").get<int>(), {}};
            } catch (const json::exception& e) {
                throw DataError("load_dataset: bad label at " + locus + ": " + e.what());
            }
        }
    }

    // optional explicit global features
    std::map<std::string, Vector> globals;
    {
        const fs::path gpath = dir / "globals.ndjson";
        std::ifstream is(gpath);
        if (is) {
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(is, line)) {
                ++line_no;
                if (line.empty()) continue;
                try {
                    json j = json::parse(line);
                    globals[j.at("video_id").get<std::string>()] = j.at("feature").get<Vector>();
                } catch (const json::exception& e) {
                    throw DataError("load_dataset: bad global feature at globals.ndjson:" +
                                    std::to_string(line_no) + ": " + e.what());
                }
            }
        }
    }

    for (auto& [id, pending] : videos) {  // std::map: already sorted by video_id
        VideoRecord rec;
        rec.video_id = id;
        rec.proposals = std::move(pending.proposals);
        const auto lit = labels.find(id);
        if (lit == labels.end())
            throw DataError("load_dataset: video '" + id + "' has proposals but no label");
        rec.label = lit->second.first;
        rec.multi_hot = lit->second.second;
        const auto git = globals.find(id);
        if (git != globals.end()) rec.global_feature = git->second;
        out.records.push_back(std::move(rec));
    }
    for (const auto& [id, l] : labels)
        if (!videos.count(id))
            out.warnings.push_back("label for video '" + id + "' has no proposals; skipped");
    return out;
}

}  // namespace strg
