#include "vesseltopo/msfm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <queue>

#include <Eigen/LU>

namespace vtopo {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Offset = std::array<int, 3>;

constexpr std::array<Offset, 13> kDirections{{
    {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
    {0, 1, 1}, {0, 1, -1}, {1, 0, 1}, {-1, 0, 1}, {1, 1, 0}, {1, -1, 0},
    {1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {-1, 1, 1},
}};
constexpr int kAxisDirections = 3;

// Each stencil holds three linearly independent directions (indices above).
constexpr std::array<std::array<int, 3>, 8> kStencils{{
    {0, 1, 2}, {0, 3, 4}, {1, 5, 6}, {2, 7, 8},
    {9, 10, 11}, {9, 10, 12}, {9, 11, 12}, {10, 11, 12},
}};

// Every voxel whose acceptance can change the arrival at the origin: the
// 26-neighbourhood plus the second axis neighbours.
constexpr auto kReach = [] {
    std::array<Offset, 32> out{};
    std::size_t k = 0;
    for (int z = -1; z <= 1; ++z) {
        for (int y = -1; y <= 1; ++y) {
            for (int x = -1; x <= 1; ++x) {
                if (x != 0 || y != 0 || z != 0) out[k++] = {x, y, z};
            }
        }
    }
    for (int a = 0; a < 3; ++a) {
        for (int step : {-2, 2}) {
            Offset o{0, 0, 0};
            o[a] = step;
            out[k++] = o;
        }
    }
    return out;
}();

// Inverse Gram matrices (D D^T)^-1 for every stencil, direction subset and
// orientation pattern. Subset bit i selects direction i; sign bit i flips it.
struct Metric {
    std::array<std::array<std::array<Eigen::Matrix3d, 8>, 8>, kStencils.size()> inv;

    explicit Metric(const Vec3& spacing) {
        for (std::size_t s = 0; s < kStencils.size(); ++s) {
            for (int subset = 1; subset < 8; ++subset) {
                for (int signs = 0; signs < 8; ++signs) {
                    std::array<Vec3, 3> dirs;
                    std::array<int, 3> used{};
                    int k = 0;
                    for (int i = 0; i < 3; ++i) {
                        if (!(subset & (1 << i))) continue;
                        const auto& o = kDirections[kStencils[s][i]];
                        const double sign = (signs & (1 << i)) ? -1.0 : 1.0;
                        dirs[k] = sign * Vec3(o[0] * spacing.x(), o[1] * spacing.y(), o[2] * spacing.z());
                        used[k] = i;
                        ++k;
                    }
                    Eigen::MatrixXd gram(k, k);
                    for (int a = 0; a < k; ++a) {
                        for (int b = 0; b < k; ++b) gram(a, b) = dirs[a].dot(dirs[b]);
                    }
                    const Eigen::MatrixXd g_inv = gram.inverse();
                    Eigen::Matrix3d full = Eigen::Matrix3d::Zero();
                    for (int a = 0; a < k; ++a) {
                        for (int b = 0; b < k; ++b) full(used[a], used[b]) = g_inv(a, b);
                    }
                    inv[s][subset][signs] = full;
                }
            }
        }
    }
};

struct UpwindTerm {
    bool available = false;
    double alpha = 1.0;
    double beta = 0.0;
    double t1 = kInf;
    bool flipped = false;
};

class Stepper {
public:
    Stepper(const SpeedMap& speed, std::span<const double> time, std::span<const std::uint8_t> accepted,
            EikonalOrder order, const Metric& metric)
        : speed_(speed), grid_(speed.grid()), time_(time), accepted_(accepted), order_(order), metric_(metric) {}

    double arrival(std::size_t idx) const {
        const double f = speed_[idx];
        if (!(f > 0.0)) return kInf;
        const double inv_f2 = 1.0 / (double(f) * f);
        const Voxel p = grid_.voxel(idx);

        std::array<UpwindTerm, kDirections.size()> upwinds;
        for (std::size_t d = 0; d < kDirections.size(); ++d) {
            upwinds[d] = upwind(p, kDirections[d], int(d) < kAxisDirections);
        }
        double best = kInf;
        for (std::size_t s = 0; s < kStencils.size(); ++s) {
            std::array<UpwindTerm, 3> terms;
            for (int i = 0; i < 3; ++i) terms[i] = upwinds[kStencils[s][i]];
            if (!terms[0].available && !terms[1].available && !terms[2].available) continue;
            best = std::min(best, solve_stencil(s, terms, inv_f2));
        }

        // Never below the latest accepted value feeding this voxel, which
        // keeps the acceptance sequence monotone.
        double floor = 0.0;
        for_each_reach(p, [&](std::size_t n) {
            if (accepted_[n]) floor = std::max(floor, time_[n]);
        });
        return std::max(best, floor);
    }

    template <typename F>
    void for_each_reach(const Voxel& p, F&& f) const {
        for (const auto& o : kReach) {
            const Voxel q{p[0] + o[0], p[1] + o[1], p[2] + o[2]};
            if (grid_.dims.contains(q)) f(grid_.index(q));
        }
    }

private:
    UpwindTerm upwind(const Voxel& p, const Offset& o, bool axis) const {
        UpwindTerm term;
        for (int sign : {1, -1}) {
            const Voxel q{p[0] - sign * o[0], p[1] - sign * o[1], p[2] - sign * o[2]};
            if (!grid_.dims.contains(q)) continue;
            const auto qi = grid_.index(q);
            if (!accepted_[qi]) continue;
            const double t1 = time_[qi];
            if (t1 >= term.t1) continue;
            term.available = true;
            term.t1 = t1;
            term.flipped = sign < 0;
            term.alpha = 1.0;
            term.beta = t1;
            // Diagonal directions stay first order: their two-step neighbour
            // is far enough away that the curvature term biases T low.
            if (order_ == EikonalOrder::MultiStencilSecond && axis) {
                const Voxel q2{p[0] - 2 * sign * o[0], p[1] - 2 * sign * o[1], p[2] - 2 * sign * o[2]};
                if (grid_.dims.contains(q2)) {
                    const auto q2i = grid_.index(q2);
                    if (accepted_[q2i] && time_[q2i] < t1) {
                        term.alpha = 1.5;
                        term.beta = 2.0 * t1 - 0.5 * time_[q2i];
                    }
                }
            }
        }
        return term;
    }

    // The characteristic must arrive from within the cone of the upwind
    // directions: the gradient weights (D D^T)^-1 a are all non-negative.
    static bool inside_cone(const Eigen::Matrix3d& m, const std::array<UpwindTerm, 3>& terms, int subset, double t) {
        Vec3 a = Vec3::Zero();
        for (int i = 0; i < 3; ++i) {
            if (subset & (1 << i)) a[i] = terms[i].alpha * t - terms[i].beta;
        }
        const Vec3 w = m * a;
        for (int i = 0; i < 3; ++i) {
            if ((subset & (1 << i)) && w[i] < -1e-12 * (1.0 + std::abs(t))) return false;
        }
        return true;
    }

    double solve_stencil(std::size_t s, const std::array<UpwindTerm, 3>& terms, double inv_f2) const {
        int subset = 0;
        int signs = 0;
        for (int i = 0; i < 3; ++i) {
            if (terms[i].available) subset |= 1 << i;
            if (terms[i].flipped) signs |= 1 << i;
        }
        while (subset != 0) {
            const Eigen::Matrix3d& m = metric_.inv[s][subset][signs];
            double a = 0.0, b = 0.0, c = -inv_f2;
            double max_t1 = 0.0;
            for (int i = 0; i < 3; ++i) {
                if (!(subset & (1 << i))) continue;
                max_t1 = std::max(max_t1, terms[i].t1);
                for (int j = 0; j < 3; ++j) {
                    if (!(subset & (1 << j))) continue;
                    const double mij = m(i, j);
                    a += mij * terms[i].alpha * terms[j].alpha;
                    b -= mij * (terms[i].alpha * terms[j].beta + terms[j].alpha * terms[i].beta);
                    c += mij * terms[i].beta * terms[j].beta;
                }
            }
            const double disc = b * b - 4.0 * a * c;
            if (disc >= 0.0 && a > 0.0) {
                const double t = (-b + std::sqrt(disc)) / (2.0 * a);
                if (t >= max_t1 && inside_cone(m, terms, subset, t)) return t;
            }
            // Drop the direction with the largest upwind value and retry.
            int drop = -1;
            for (int i = 0; i < 3; ++i) {
                if ((subset & (1 << i)) && (drop < 0 || terms[i].t1 > terms[drop].t1)) drop = i;
            }
            subset &= ~(1 << drop);
        }
        return kInf;
    }

    const SpeedMap& speed_;
    const Grid& grid_;
    std::span<const double> time_;
    std::span<const std::uint8_t> accepted_;
    EikonalOrder order_;
    const Metric& metric_;
};

// Voxels within `radius` mm of a seed get the straight-line travel time,
// integrating slowness with the trapezoid rule between the two end points.
void initialize_sources(const SpeedMap& speed, double radius, const std::vector<std::size_t>& seeds,
                        std::vector<double>& time, std::vector<std::uint8_t>& fixed) {
    const auto& grid = speed.grid();
    const int rx = static_cast<int>(radius / grid.spacing.x());
    const int ry = static_cast<int>(radius / grid.spacing.y());
    const int rz = static_cast<int>(radius / grid.spacing.z());
    for (const auto si : seeds) {
        const Voxel s = grid.voxel(si);
        const double slow_s = 1.0 / speed[si];
        for (int dz = -rz; dz <= rz; ++dz) {
            for (int dy = -ry; dy <= ry; ++dy) {
                for (int dx = -rx; dx <= rx; ++dx) {
                    const Voxel q{s[0] + dx, s[1] + dy, s[2] + dz};
                    if (!grid.dims.contains(q)) continue;
                    const double d = grid.spacing.cwiseProduct(Vec3(dx, dy, dz)).norm();
                    if (d > radius) continue;
                    const auto qi = grid.index(q);
                    if (!(speed[qi] > 0.0f)) continue;
                    time[qi] = std::min(time[qi], 0.5 * d * (slow_s + 1.0 / speed[qi]));
                    fixed[qi] = 1;
                }
            }
        }
    }
}

}  // namespace

double local_arrival(const SpeedMap& speed, std::span<const double> time, std::span<const std::uint8_t> accepted,
                     std::size_t idx, EikonalOrder order) {
    const Metric metric(speed.spacing());
    return Stepper(speed, time, accepted, order, metric).arrival(idx);
}

EikonalTrace solve_eikonal_traced(const SpeedMap& speed, const std::vector<Voxel>& seeds,
                                  const EikonalOptions& options) {
    if (seeds.empty()) {
        throw InvalidArgument("solve_eikonal: no seeds given");
    }
    const auto& grid = speed.grid();
    const std::size_t n = speed.size();

    EikonalTrace out;
    out.time.assign(n, kInf);
    std::vector<std::uint8_t> accepted(n, 0);
    const Metric metric(grid.spacing);
    const Stepper stepper(speed, out.time, accepted, options.order, metric);

    std::vector<std::uint8_t> is_target(options.stop_after.empty() ? 0 : n, 0);
    std::size_t targets_left = 0;
    for (const auto& v : options.stop_after) {
        if (!grid.dims.contains(v)) throw InvalidArgument("solve_eikonal: stop voxel outside the grid");
        auto& flag = is_target[grid.index(v)];
        if (!flag) {
            flag = 1;
            ++targets_left;
        }
    }

    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

    auto accept = [&](std::size_t idx) {
        accepted[idx] = 1;
        out.accepted.push_back(idx);
        if (!is_target.empty() && is_target[idx]) targets_left = options.stop_at_first ? 0 : targets_left - 1;
    };
    std::vector<std::uint8_t> fixed(n, 0);
    auto relax_around = [&](std::size_t idx) {
        stepper.for_each_reach(grid.voxel(idx), [&](std::size_t q) {
            if (accepted[q] || fixed[q] || !(speed[q] > 0.0f)) return;
            const double t = stepper.arrival(q);
            if (t != out.time[q]) {
                out.time[q] = t;
                if (t < kInf) heap.emplace(t, q);
            }
        });
    };

    std::vector<std::size_t> seed_indices;
    for (const auto& s : seeds) {
        if (!grid.dims.contains(s)) {
            throw InvalidArgument("solve_eikonal: seed (" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
                                  std::to_string(s[2]) + ") outside the grid");
        }
        const auto idx = grid.index(s);
        if (!(speed[idx] > 0.0f)) {
            throw InvalidArgument("solve_eikonal: seed (" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
                                  std::to_string(s[2]) + ") has zero speed");
        }
        if (fixed[idx]) continue;
        fixed[idx] = 1;
        out.time[idx] = 0.0;
        seed_indices.push_back(idx);
    }
    if (options.source_radius > 0.0) {
        initialize_sources(speed, options.source_radius, seed_indices, out.time, fixed);
    }
    // Prescribed voxels enter the queue with their final value and are
    // never updated by the march.
    for (std::size_t i = 0; i < n; ++i) {
        if (fixed[i]) {
            out.prescribed.push_back(i);
            heap.emplace(out.time[i], i);
        }
    }

    while (!heap.empty() && !(is_target.size() && targets_left == 0)) {
        const auto [t, idx] = heap.top();
        heap.pop();
        if (accepted[idx] || t != out.time[idx]) continue;
        if (t > options.max_time) break;
        accept(idx);
        relax_around(idx);
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (!accepted[i]) out.time[i] = kInf;
    }
    return out;
}

TimeMap solve_eikonal(const SpeedMap& speed, const std::vector<Voxel>& seeds, EikonalOrder order) {
    EikonalOptions options;
    options.order = order;
    return solve_eikonal(speed, seeds, options);
}

TimeMap solve_eikonal(const SpeedMap& speed, const std::vector<Voxel>& seeds, const EikonalOptions& options) {
    const auto trace = solve_eikonal_traced(speed, seeds, options);
    TimeMap out(speed.grid());
    for (std::size_t i = 0; i < trace.time.size(); ++i) out[i] = static_cast<float>(trace.time[i]);
    return out;
}

SpeedMap speed_from_distance(const DistanceMap& dt, double exponent) {
    if (!std::isfinite(exponent) || exponent < 0.0) {
        throw InvalidArgument("speed_from_distance: exponent must be finite and non-negative");
    }
    const auto data = dt.data();
    const float max_dt = data.empty() ? 0.0f : *std::max_element(data.begin(), data.end());
    if (!(max_dt > 0.0f)) {
        throw NumericalError("speed_from_distance: distance map has no positive value");
    }
    SpeedMap out(dt.grid(), 0.0f);
    for (std::size_t i = 0; i < dt.size(); ++i) {
        if (dt[i] > 0.0f) {
            out[i] = static_cast<float>(std::pow(double(dt[i]) / max_dt, exponent));
        }
    }
    return out;
}

double GeodesicPath::length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) total += (points[i] - points[i - 1]).norm();
    return total;
}

std::string to_string(TraceRejection r) {
    switch (r) {
        case TraceRejection::Unreachable: return "unreachable";
        case TraceRejection::Stagnated: return "stagnated";
        case TraceRejection::LowConfidence: return "low-confidence";
        case TraceRejection::AtSeed: return "at-seed";
        case TraceRejection::Covered: return "covered";
    }
    return "unknown";
}

namespace {

// Time map view with unreached voxels replaced by a finite barrier value so
// trilinear interpolation and finite differences stay well defined.
class TimeField {
public:
    explicit TimeField(const TimeMap& time) : time_(time) {
        double max_finite = 0.0;
        for (float t : time.data()) {
            if (std::isfinite(t)) max_finite = std::max(max_finite, double(t));
        }
        barrier_ = 2.0 * max_finite + 1.0;
    }

    [[nodiscard]] const TimeMap& map() const { return time_; }

    [[nodiscard]] double voxel_value(int x, int y, int z) const {
        const float t = time_.clamped(x, y, z);
        return std::isfinite(t) ? double(t) : barrier_;
    }

    [[nodiscard]] double at(const Vec3& world) const {
        const auto& d = time_.dims();
        Vec3 c = time_.grid().to_continuous(world);
        c.x() = std::clamp(c.x(), 0.0, double(d.nx - 1));
        c.y() = std::clamp(c.y(), 0.0, double(d.ny - 1));
        c.z() = std::clamp(c.z(), 0.0, double(d.nz - 1));
        const int x0 = static_cast<int>(std::floor(c.x()));
        const int y0 = static_cast<int>(std::floor(c.y()));
        const int z0 = static_cast<int>(std::floor(c.z()));
        const double fx = c.x() - x0, fy = c.y() - y0, fz = c.z() - z0;
        double acc = 0.0;
        for (int dz = 0; dz <= 1; ++dz) {
            const double wz = dz ? fz : 1.0 - fz;
            if (wz == 0.0) continue;
            for (int dy = 0; dy <= 1; ++dy) {
                const double wy = dy ? fy : 1.0 - fy;
                if (wy == 0.0) continue;
                for (int dx = 0; dx <= 1; ++dx) {
                    const double wx = dx ? fx : 1.0 - fx;
                    if (wx == 0.0) continue;
                    acc += wx * wy * wz * voxel_value(x0 + dx, y0 + dy, z0 + dz);
                }
            }
        }
        return acc;
    }

    [[nodiscard]] Vec3 gradient(const Vec3& world) const {
        Vec3 g;
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 h = Vec3::Zero();
            h[axis] = 0.5 * time_.spacing()[axis];
            g[axis] = (at(world + h) - at(world - h)) / (2.0 * h[axis]);
        }
        return g;
    }

    [[nodiscard]] bool in_seed_voxel(const Vec3& world) const {
        const Voxel v = time_.grid().nearest_voxel(world);
        return time_.dims().contains(v) && time_.at(v) == 0.0f;
    }

private:
    const TimeMap& time_;
    double barrier_ = 1.0;
};

std::vector<Vec3> unit_directions() {
    std::vector<Vec3> dirs;
    for (int z = -1; z <= 1; ++z) {
        for (int y = -1; y <= 1; ++y) {
            for (int x = -1; x <= 1; ++x) {
                if (x || y || z) dirs.push_back(Vec3(x, y, z).normalized());
            }
        }
    }
    return dirs;
}

GeodesicPath descend(const TimeField& field, const Vec3& start, double step) {
    if (!(step > 0.0)) throw InvalidArgument("backtrace: step must be positive");
    const auto& time = field.map();
    const Voxel sv = time.grid().nearest_voxel(start);
    if (!time.dims().contains(sv) || !std::isfinite(time.at(sv))) {
        throw NumericalError("backtrace: start (" + std::to_string(start.x()) + "," + std::to_string(start.y()) + "," +
                             std::to_string(start.z()) + ") is unreachable");
    }
    static const std::vector<Vec3> dirs = unit_directions();

    const auto& d = time.dims();
    const Vec3 extent = time.spacing().cwiseProduct(Vec3(d.nx, d.ny, d.nz));
    const std::size_t max_steps = static_cast<std::size_t>(4.0 * (extent.x() + extent.y() + extent.z()) / step) + 10;

    GeodesicPath path;
    Vec3 pos = start;
    double t = field.at(pos);
    path.points.push_back(pos);
    for (std::size_t it = 0;; ++it) {
        if (t <= step) break;
        if (field.in_seed_voxel(pos)) {
            const Vec3 seed = time.grid().to_world(time.grid().nearest_voxel(pos));
            if (seed != pos) path.points.push_back(seed);
            break;
        }
        if (it >= max_steps) {
            throw NumericalError("backtrace: step budget exhausted at (" + std::to_string(pos.x()) + "," +
                                 std::to_string(pos.y()) + "," + std::to_string(pos.z()) + ")");
        }
        Vec3 next = pos;
        double t_next = t;
        const Vec3 g = field.gradient(pos);
        if (g.norm() > 0.0) {
            const Vec3 cand = pos - step * g.normalized();
            const double tc = field.at(cand);
            if (tc < t) {
                next = cand;
                t_next = tc;
            }
        }
        if (t_next >= t) {
            for (const auto& u : dirs) {
                const Vec3 cand = pos + step * u.cwiseProduct(time.spacing()) / time.spacing().minCoeff();
                const double tc = field.at(cand);
                if (tc < t_next) {
                    next = cand;
                    t_next = tc;
                }
            }
        }
        if (t_next >= t) {
            // Rough time maps can trap the interpolated descent; fall back to
            // the lowest corner of the enclosing cell, or from a voxel center
            // to its lowest 26-neighbour.
            const Vec3 c = time.grid().to_continuous(pos);
            const Voxel base{static_cast<int>(std::floor(c.x())), static_cast<int>(std::floor(c.y())),
                             static_cast<int>(std::floor(c.z()))};
            const bool on_center = (c - Vec3(base[0], base[1], base[2])).isZero(1e-12);
            for (int dz = on_center ? -1 : 0; dz <= 1; ++dz) {
                for (int dy = on_center ? -1 : 0; dy <= 1; ++dy) {
                    for (int dx = on_center ? -1 : 0; dx <= 1; ++dx) {
                        const Voxel q{base[0] + dx, base[1] + dy, base[2] + dz};
                        if (!d.contains(q)) continue;
                        const double tq = field.voxel_value(q[0], q[1], q[2]);
                        if (tq < t_next) {
                            next = time.grid().to_world(q);
                            t_next = tq;
                        }
                    }
                }
            }
        }
        if (t_next >= t) {
            throw NumericalError("backtrace: descent stagnated at (" + std::to_string(pos.x()) + "," +
                                 std::to_string(pos.y()) + "," + std::to_string(pos.z()) + ")");
        }
        pos = next;
        t = t_next;
        path.points.push_back(pos);
    }
    return path;
}

}  // namespace

GeodesicPath backtrace(const TimeMap& time, const Vec3& start, double step) {
    const TimeField field(time);
    return descend(field, start, step);
}

SkeletonTrace trace_skeleton_tree(const TimeMap& time, const DistanceMap& dt, const std::vector<Vec3>& endpoints,
                                  double accept_threshold, double step) {
    if (!time.grid().same_geometry(dt.grid())) {
        throw InvalidArgument("trace_skeleton_tree: time map and distance map grids differ");
    }
    const TimeField field(time);
    const auto& grid = time.grid();

    struct Pending {
        std::size_t index;
        double t;
    };
    std::vector<Pending> order;
    SkeletonTrace out;
    for (std::size_t i = 0; i < endpoints.size(); ++i) {
        const Voxel v = grid.nearest_voxel(endpoints[i]);
        if (!grid.dims.contains(v) || !std::isfinite(time.at(v))) {
            out.rejected.push_back({i, TraceRejection::Unreachable, 0.0});
            continue;
        }
        order.push_back({i, field.at(endpoints[i])});
    }
    std::stable_sort(order.begin(), order.end(), [](const Pending& a, const Pending& b) { return a.t > b.t; });

    std::vector<std::uint8_t> covered(time.size(), 0);
    auto touches_cover = [&](const Vec3& p) {
        const Voxel v = grid.nearest_voxel(p);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const Voxel q{v[0] + dx, v[1] + dy, v[2] + dz};
                    if (grid.dims.contains(q) && covered[grid.index(q)]) return true;
                }
        return false;
    };

    for (const auto& item : order) {
        GeodesicPath full;
        try {
            full = descend(field, endpoints[item.index], step);
        } catch (const NumericalError&) {
            out.rejected.push_back({item.index, TraceRejection::Stagnated, 0.0});
            continue;
        }
        if (full.points.size() < 2) {
            out.rejected.push_back({item.index, TraceRejection::AtSeed, 0.0});
            continue;
        }
        GeodesicPath segment;
        for (const auto& p : full.points) {
            segment.points.push_back(p);
            if (touches_cover(p)) break;
        }
        if (segment.points.size() < 2) {
            out.rejected.push_back({item.index, TraceRejection::Covered, 0.0});
            continue;
        }
        double sum = 0.0, peak = 0.0;
        for (const auto& p : segment.points) {
            const double v = sample_trilinear(dt, p);
            sum += v;
            peak = std::max(peak, v);
        }
        const double score = peak > 0.0 ? sum / (segment.points.size() * peak) : 0.0;
        if (score < accept_threshold) {
            out.rejected.push_back({item.index, TraceRejection::LowConfidence, score});
            continue;
        }
        for (const auto& p : segment.points) {
            const Voxel v = grid.nearest_voxel(p);
            if (grid.dims.contains(v)) covered[grid.index(v)] = 1;
        }
        out.accepted.push_back({item.index, std::move(segment), score});
    }
    std::sort(out.rejected.begin(), out.rejected.end(),
              [](const RejectedEndpoint& a, const RejectedEndpoint& b) { return a.endpoint < b.endpoint; });
    return out;
}

}  // namespace vtopo
