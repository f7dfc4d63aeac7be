#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/Geometry>

#include "vesseltopo/rng.hpp"
#include "vesseltopo/synth.hpp"

namespace vtopo {
namespace {

// Closest distance between segments [p1,q1] and [p2,q2].
double segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
    const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
    const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
    double s = 0.0, t = 0.0;
    if (a <= 1e-12 && e <= 1e-12) return r.norm();
    if (a <= 1e-12) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= 1e-12) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2), denom = a * e - b * b;
            s = denom > 1e-12 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return ((p1 + s * d1) - (p2 + t * d2)).norm();
}

Vec3 any_perpendicular(const Vec3& d) {
    const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    return d.cross(helper).normalized();
}

class Grower {
public:
    explicit Grower(const SynthSpec& spec) : spec_(spec), rng_(spec.seed) {
        const auto& d = spec.dims;
        extent_ = spec.spacing.cwiseProduct(Vec3(d.nx - 1, d.ny - 1, d.nz - 1));
    }

    std::vector<TubeSegment> grow(Vec3& artery_root, Vec3& vein_root) {
        // A crowded layout can leave no room for later splits; regrow from the
        // trunks with the generator state carried over.
        for (int restart = 0; restart < kRestarts; ++restart) {
            try {
                return grow_once(artery_root, vein_root);
            } catch (const Crowded&) {
            }
        }
        throw InvalidArgument("generate: no layout found within the volume after " + std::to_string(kRestarts) +
                              " attempts with " + std::to_string(spec_.max_attempts) +
                              " placements per split; enlarge dims or reduce depth/lengths");
    }

private:
    struct Crowded {};
    static constexpr int kRestarts = 64;

    std::vector<TubeSegment> grow_once(Vec3& artery_root, Vec3& vein_root) {
        segments_.clear();
        const Vec3 center(0.5 * extent_.x(), 0.5 * extent_.y(), spec_.trunk_radius + 3.0 * spec_.spacing.z());
        artery_root = center - Vec3(0.5 * spec_.intertwine_offset, 0, 0);
        vein_root = center + Vec3(0.5 * spec_.intertwine_offset, 0, 0);

        for (const auto& [root, label] : {std::pair{artery_root, VesselLabel::Artery}, {vein_root, VesselLabel::Vein}}) {
            bool placed = false;
            for (int attempt = 0; attempt < spec_.max_attempts && !placed; ++attempt) {
                const double tilt = rng_.uniform(0.0, 10.0) * M_PI / 180.0;
                const double azimuth = rng_.uniform(0.0, 2.0 * M_PI);
                const Vec3 dir = deflect(Vec3::UnitZ(), tilt, azimuth);
                TubeSegment s{root, root + spec_.trunk_length * dir, spec_.trunk_radius,
                              spec_.trunk_radius * spec_.radius_decay, label, 0, -1};
                if (fits(s, -1, -1)) {
                    segments_.push_back(s);
                    placed = true;
                }
            }
            if (!placed) throw Crowded{};
        }

        std::deque<int> queue{0, 1};
        while (!queue.empty()) {
            const int parent = queue.front();
            queue.pop_front();
            if (segments_[parent].level + 1 >= spec_.depth) continue;
            const auto children = split(parent);
            queue.push_back(children.first);
            queue.push_back(children.second);
        }
        return segments_;
    }

    static Vec3 deflect(const Vec3& dir, double angle, double azimuth) {
        const Vec3 u = any_perpendicular(dir);
        const Vec3 w = dir.cross(u);
        const Vec3 e = std::cos(azimuth) * u + std::sin(azimuth) * w;
        return (std::cos(angle) * dir + std::sin(angle) * e).normalized();
    }

    std::pair<int, int> split(int parent_index) {
        const TubeSegment parent = segments_[parent_index];
        const int level = parent.level + 1;
        const Vec3 pdir = (parent.end - parent.start).normalized();
        const double length = spec_.trunk_length * std::pow(spec_.length_decay, level);
        const double lo = spec_.min_angle_deg * M_PI / 180.0, hi = spec_.max_angle_deg * M_PI / 180.0;
        for (int attempt = 0; attempt < spec_.max_attempts; ++attempt) {
            const double azimuth = rng_.uniform(0.0, 2.0 * M_PI);
            TubeSegment a, b;
            int k = 0;
            for (TubeSegment* s : {&a, &b}) {
                const Vec3 dir = deflect(pdir, rng_.uniform(lo, hi), azimuth + M_PI * k++);
                *s = TubeSegment{parent.end,        parent.end + length * dir,
                                 parent.end_radius, parent.end_radius * spec_.radius_decay,
                                 parent.label,      level,
                                 parent_index};
            }
            if (!fits(a, parent_index, -1)) continue;
            segments_.push_back(a);
            if (!fits(b, parent_index, static_cast<int>(segments_.size()) - 1)) {
                segments_.pop_back();
                continue;
            }
            segments_.push_back(b);
            return {static_cast<int>(segments_.size()) - 2, static_cast<int>(segments_.size()) - 1};
        }
        throw Crowded{};
    }

    bool fits(const TubeSegment& s, int parent, int sibling) const {
        for (const Vec3& p : {s.start, s.end}) {
            const double margin = s.start_radius + 2.0 * spec_.spacing.maxCoeff();
            for (int a = 0; a < 3; ++a) {
                if (p[a] < margin || p[a] > extent_[a] - margin) return false;
            }
        }
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const int ii = static_cast<int>(i);
            if (ii == parent || ii == sibling) continue;
            const auto& o = segments_[i];
            // Segments sharing an end point belong to the same junction.
            if (o.parent == parent && parent >= 0) continue;
            const double gap = segment_distance(s.start, s.end, o.start, o.end) -
                               std::max(s.start_radius, s.end_radius) - std::max(o.start_radius, o.end_radius);
            if (gap < spec_.clearance) return false;
        }
        return true;
    }

    const SynthSpec& spec_;
    Rng rng_;
    Vec3 extent_;
    std::vector<TubeSegment> segments_;
};

}  // namespace

void validate(const SynthSpec& spec) {
    if (spec.depth < 1) throw InvalidArgument("synth: depth must be at least 1");
    if (!(spec.radius_decay > 0.0 && spec.radius_decay < 1.0)) throw InvalidArgument("synth: radius_decay must lie in (0,1)");
    if (!(spec.length_decay > 0.0)) throw InvalidArgument("synth: length_decay must be positive");
    if (!(spec.trunk_radius > 0.0) || !(spec.trunk_length > 0.0)) {
        throw InvalidArgument("synth: trunk radius and length must be positive");
    }
    if (!(spec.min_angle_deg >= 0.0 && spec.min_angle_deg <= spec.max_angle_deg && spec.max_angle_deg < 90.0)) {
        throw InvalidArgument("synth: branch angles must satisfy 0 <= min <= max < 90");
    }
    if (spec.dims.nx <= 0 || spec.dims.ny <= 0 || spec.dims.nz <= 0) throw InvalidArgument("synth: dims must be positive");
    if (!(spec.spacing.minCoeff() > 0.0)) throw InvalidArgument("synth: spacing must be positive");
    const double tip = spec.trunk_radius * std::pow(spec.radius_decay, spec.depth);
    if (tip < 2.0 * spec.spacing.maxCoeff() - 1e-9) {
        throw InvalidArgument("synth: terminal radius " + std::to_string(tip) + " mm is below 2 voxels");
    }
    if (spec.max_attempts < 1) throw InvalidArgument("synth: max_attempts must be positive");
}

std::pair<double, double> TubeSegment::distance_and_radius(const Vec3& p) const {
    const Vec3 d = end - start;
    const double len2 = d.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - start).dot(d) / len2, 0.0, 1.0) : 0.0;
    return {(p - (start + t * d)).norm(), start_radius + t * (end_radius - start_radius)};
}

std::size_t SynthCase::terminal_count() const {
    std::vector<int> kids(segments.size(), 0);
    for (const auto& s : segments) {
        if (s.parent >= 0) ++kids[s.parent];
    }
    std::size_t n = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        n += kids[i] == 0;
        n += segments[i].parent < 0;
    }
    return n;
}

std::size_t SynthCase::bifurcation_count() const {
    std::vector<int> kids(segments.size(), 0);
    for (const auto& s : segments) {
        if (s.parent >= 0) ++kids[s.parent];
    }
    return static_cast<std::size_t>(std::count_if(kids.begin(), kids.end(), [](int k) { return k > 0; }));
}

SynthCase generate(const SynthSpec& spec) {
    validate(spec);
    SynthCase out;
    out.spec = spec;
    out.segments = Grower(spec).grow(out.artery_root, out.vein_root);
    out.mask = VesselMask(spec.dims, spec.spacing);
    out.truth = MaskVolume(spec.dims, spec.spacing);

    const Grid& grid = out.mask.grid();
    std::vector<double> best(grid.dims.count(), std::numeric_limits<double>::infinity());
    for (const auto& s : out.segments) {
        const double r = std::max(s.start_radius, s.end_radius);
        Vec3 lo = s.start.cwiseMin(s.end) - Vec3::Constant(r + 1.0);
        Vec3 hi = s.start.cwiseMax(s.end) + Vec3::Constant(r + 1.0);
        const Voxel vlo = grid.nearest_voxel(lo), vhi = grid.nearest_voxel(hi);
        for (int z = std::max(0, vlo[2]); z <= std::min(grid.dims.nz - 1, vhi[2]); ++z)
            for (int y = std::max(0, vlo[1]); y <= std::min(grid.dims.ny - 1, vhi[1]); ++y)
                for (int x = std::max(0, vlo[0]); x <= std::min(grid.dims.nx - 1, vhi[0]); ++x) {
                    const auto [dist, radius] = s.distance_and_radius(grid.to_world({x, y, z}));
                    if (dist > radius) continue;
                    const auto i = grid.index(x, y, z);
                    out.mask[i] = 1;
                    if (dist - radius < best[i]) {
                        best[i] = dist - radius;
                        out.truth[i] = static_cast<std::uint8_t>(s.label);
                    }
                }
    }
    return out;
}

TruthMatch match_truth(const TopologyForest& forest, const SynthCase& c) {
    TruthMatch out;
    out.labels.labels.assign(forest.size(), VesselLabel::Vein);
    out.matched.assign(forest.size(), 0);
    for (const auto& n : forest.nodes) {
        double best = std::numeric_limits<double>::infinity();
        double radius = 0.0;
        const TubeSegment* nearest = nullptr;
        for (const auto& s : c.segments) {
            const auto [d, r] = s.distance_and_radius(n.pos);
            if (d < best) {
                best = d;
                radius = r;
                nearest = &s;
            }
        }
        if (nearest) out.labels.labels[n.id] = nearest->label;
        if (nearest && best <= 2.0 * radius) {
            out.matched[n.id] = 1;
        } else {
            ++out.unmatched;
        }
    }
    if (out.unmatched_fraction() > 0.10) {
        throw NumericalError("match_truth: " + std::to_string(out.unmatched) + " of " + std::to_string(forest.size()) +
                             " particles are farther than twice the local radius from every generator centerline");
    }
    return out;
}

constexpr double kScaleGuard = 1e-4;

MaskVolume reconstruct_labels(const TopologyForest& forest, const LabelTable& labels, const Grid& grid) {
    MaskVolume out(grid);
    if (labels.labels.empty()) return out;
    if (labels.size() != forest.size()) {
        throw InvalidArgument("reconstruct_labels: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(forest.size()) + " particles");
    }
    std::vector<double> best(grid.dims.count(), std::numeric_limits<double>::infinity());
    for (const auto& n : forest.nodes) {
        const Voxel lo = grid.nearest_voxel(n.pos - Vec3::Constant(n.scale + 1.0));
        const Voxel hi = grid.nearest_voxel(n.pos + Vec3::Constant(n.scale + 1.0));
        for (int z = std::max(0, lo[2]); z <= std::min(grid.dims.nz - 1, hi[2]); ++z)
            for (int y = std::max(0, lo[1]); y <= std::min(grid.dims.ny - 1, hi[1]); ++y)
                for (int x = std::max(0, lo[0]); x <= std::min(grid.dims.nx - 1, hi[0]); ++x) {
                    const double d = (grid.to_world({x, y, z}) - n.pos).norm();
                    const auto i = grid.index(x, y, z);
                    // Scales are float-rounded distances to a background voxel; the
                    // guard keeps that voxel out. Nodes come in ascending id order, so
                    // strict < keeps the smaller id on ties.
                    if (d < n.scale - kScaleGuard && d < best[i]) {
                        best[i] = d;
                        out[i] = static_cast<std::uint8_t>(labels.labels[n.id]);
                    }
                }
    }
    return out;
}

MaskVolume fuse_hilum(const MaskVolume& labels, const VesselMask& hilum_artery, const VesselMask& hilum_vein) {
    if (!labels.grid().same_geometry(hilum_artery.grid()) || !labels.grid().same_geometry(hilum_vein.grid())) {
        throw InvalidArgument("fuse_hilum: label volume and hilum masks have different grids");
    }
    MaskVolume out = labels;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (hilum_artery[i] && hilum_vein[i]) {
            const Voxel v = out.grid().voxel(i);
            throw InvalidArgument("fuse_hilum: artery and vein hilum masks overlap at voxel (" + std::to_string(v[0]) +
                                  "," + std::to_string(v[1]) + "," + std::to_string(v[2]) + ")");
        }
        if (out[i]) continue;
        if (hilum_artery[i]) out[i] = static_cast<std::uint8_t>(VesselLabel::Artery);
        if (hilum_vein[i]) out[i] = static_cast<std::uint8_t>(VesselLabel::Vein);
    }
    return out;
}

Metrics evaluate(const LabelTable& pred, const LabelTable& truth, const std::vector<std::uint8_t>& include) {
    if (pred.size() != truth.size()) {
        throw InvalidArgument("evaluate: prediction covers " + std::to_string(pred.size()) + " ids, truth " +
                              std::to_string(truth.size()));
    }
    if (!include.empty() && include.size() != pred.size()) {
        throw InvalidArgument("evaluate: inclusion mask size differs from the label tables");
    }
    Metrics m;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!include.empty() && !include[i]) continue;
        const bool p = pred.labels[i] == VesselLabel::Artery;
        const bool t = truth.labels[i] == VesselLabel::Artery;
        if (p && t) ++m.tp;
        if (!p && !t) ++m.tn;
        if (p && !t) ++m.fp;
        if (!p && t) ++m.fn;
    }
    auto rate = [](std::size_t num, std::size_t den) { return den == 0 ? 1.0 : double(num) / double(den); };
    m.accuracy = rate(m.tp + m.tn, m.total());
    m.sensitivity = rate(m.tp, m.tp + m.fn);
    m.specificity = rate(m.tn, m.tn + m.fp);
    return m;
}

}  // namespace vtopo
