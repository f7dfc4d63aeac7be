#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "vesseltopo/topology.hpp"

namespace vtopo {
namespace {

class Components {
public:
    explicit Components(const TopologyForest& forest) {
        const auto label = forest.components();
        parent_.resize(label.size());
        std::iota(parent_.begin(), parent_.end(), 0);
        for (const auto& [a, b] : forest.edges) unite(a, b);
    }

    int add() {
        parent_.push_back(static_cast<int>(parent_.size()));
        return parent_.back();
    }

    int find(int x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<int> parent_;
};

// Sub-box of `grid` centered on a voxel, clipped to the grid.
struct Box {
    Voxel lo, hi;
    Grid grid;

    [[nodiscard]] bool contains(const Voxel& v) const {
        for (int a = 0; a < 3; ++a) {
            if (v[a] < lo[a] || v[a] > hi[a]) return false;
        }
        return true;
    }
    [[nodiscard]] Voxel local(const Voxel& v) const { return {v[0] - lo[0], v[1] - lo[1], v[2] - lo[2]}; }
    [[nodiscard]] Voxel global(const Voxel& v) const { return {v[0] + lo[0], v[1] + lo[1], v[2] + lo[2]}; }
};

Box make_box(const Grid& grid, const Voxel& center, double reach_mm) {
    Box box;
    const int dims[3] = {grid.dims.nx, grid.dims.ny, grid.dims.nz};
    int size[3];
    for (int a = 0; a < 3; ++a) {
        const int r = static_cast<int>(std::ceil(reach_mm / grid.spacing[a])) + 1;
        box.lo[a] = std::max(0, center[a] - r);
        box.hi[a] = std::min(dims[a] - 1, center[a] + r);
        size[a] = box.hi[a] - box.lo[a] + 1;
    }
    box.grid = Grid{{size[0], size[1], size[2]}, grid.spacing, grid.to_world(box.lo)};
    return box;
}

std::vector<Voxel> path_voxels(const GeodesicPath& path, const Grid& grid) {
    std::vector<Voxel> out;
    auto push = [&](const Vec3& p) {
        const Voxel v = grid.nearest_voxel(p);
        if (out.empty() || out.back() != v) out.push_back(v);
    };
    const double fine = 0.25 * grid.spacing.minCoeff();
    for (std::size_t i = 0; i < path.points.size(); ++i) {
        if (i > 0) {
            const Vec3 a = path.points[i - 1], b = path.points[i];
            const int steps = static_cast<int>(std::ceil((b - a).norm() / fine));
            for (int k = 1; k < steps; ++k) push(a + (b - a) * (double(k) / steps));
        }
        push(path.points[i]);
    }
    return out;
}

}  // namespace

RepairOutcome repair(const TopologyForest& input, const std::vector<int>& flagged, const SpeedMap& speed,
                     const DistanceMap& dt, const FloatVolume* enhanced, const RepairParams& params) {
    if (!speed.grid().same_geometry(dt.grid())) throw InvalidArgument("repair: speed and distance map grids differ");
    if (enhanced && !enhanced->grid().same_geometry(dt.grid())) {
        throw InvalidArgument("repair: enhanced volume grid differs");
    }
    RepairOutcome out;
    out.forest = input;
    auto& forest = out.forest;
    forest.roots.clear();
    forest.parent.clear();
    const auto& grid = speed.grid();

    std::unordered_map<std::size_t, int> at_voxel;
    for (const auto& n : forest.nodes) at_voxel[grid.index(grid.nearest_voxel(n.pos))] = n.id;
    std::vector<std::size_t> degree = forest.degrees();
    Components comps(forest);

    std::vector<int> order = flagged;
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());

    for (const int f : order) {
        if (f < 0 || static_cast<std::size_t>(f) >= input.size()) {
            throw InvalidArgument("repair: flagged id " + std::to_string(f) + " not in forest");
        }
        if (degree[f] > 1) {
            out.unrepaired.emplace_back(f, "no longer a terminal");
            continue;
        }
        const Particle& term = forest.nodes[f];
        const int own = comps.find(f);
        const Voxel tv = grid.nearest_voxel(term.pos);
        const double reach = std::max(params.min_reach_mm, params.reach_scale_factor * term.scale);
        const Box box = make_box(grid, tv, reach);

        auto foreign_free = [&](int q) { return comps.find(q) != own && degree[q] < 3; };
        std::vector<Voxel> targets;
        for (const auto& [vi, q] : at_voxel) {
            const Voxel v = grid.voxel(vi);
            if (box.contains(v) && foreign_free(q)) targets.push_back(box.local(v));
        }
        if (targets.empty()) {
            out.unrepaired.emplace_back(f, "no other component within reach");
            continue;
        }
        std::sort(targets.begin(), targets.end());

        SpeedMap local(box.grid);
        for (int z = 0; z < box.grid.dims.nz; ++z)
            for (int y = 0; y < box.grid.dims.ny; ++y)
                for (int x = 0; x < box.grid.dims.nx; ++x) local.at(x, y, z) = speed.at(box.global({x, y, z}));
        if (!(local.at(box.local(tv)) > 0.0f)) {
            out.unrepaired.emplace_back(f, "terminal lies on zero speed");
            continue;
        }
        EikonalOptions opt;
        opt.order = params.order;
        opt.stop_after = targets;
        opt.stop_at_first = true;
        const auto trace = solve_eikonal_traced(local, {box.local(tv)}, opt);
        const std::size_t last = trace.accepted.back();
        if (!std::binary_search(targets.begin(), targets.end(), box.grid.voxel(last))) {
            out.unrepaired.emplace_back(f, "unreachable");
            continue;
        }
        TimeMap time(box.grid);
        for (std::size_t i = 0; i < time.size(); ++i) time[i] = static_cast<float>(trace.time[i]);

        GeodesicPath path;
        try {
            const double step = std::min(params.backtrace_step, 0.5 * grid.spacing.minCoeff());
            path = backtrace(time, box.grid.to_world(box.grid.voxel(last)), step);
        } catch (const NumericalError& e) {
            out.unrepaired.emplace_back(f, e.what());
            continue;
        }
        std::reverse(path.points.begin(), path.points.end());

        // Walk from the terminal towards the target, creating particles until
        // a free particle of another component is touched.
        std::vector<Particle> chain;
        int hit = -1;
        auto free_neighbour = [&](const Voxel& v) {
            int best = -1;
            double best_d = 0.0;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const Voxel q{v[0] + dx, v[1] + dy, v[2] + dz};
                        if (!grid.dims.contains(q)) continue;
                        const auto it = at_voxel.find(grid.index(q));
                        if (it == at_voxel.end() || !foreign_free(it->second)) continue;
                        const double d = grid.spacing.cwiseProduct(Vec3(dx, dy, dz)).norm();
                        if (best < 0 || d < best_d || (d == best_d && it->second < best)) {
                            best = it->second;
                            best_d = d;
                        }
                    }
            return best;
        };
        hit = free_neighbour(tv);
        for (const auto& v : path_voxels(path, grid)) {
            if (hit >= 0) break;
            if (v == tv) continue;
            const auto vi = grid.index(v);
            if (const auto it = at_voxel.find(vi); it != at_voxel.end()) {
                if (foreign_free(it->second)) hit = it->second;
                continue;
            }
            if (!(dt[vi] > 0.0f)) continue;
            if (std::any_of(chain.begin(), chain.end(), [&](const Particle& p) { return grid.nearest_voxel(p.pos) == v; })) {
                continue;
            }
            Particle p;
            p.pos = grid.to_world(v);
            p.scale = dt[vi];
            p.intensity = enhanced ? double((*enhanced)[vi]) : term.intensity;
            chain.push_back(p);
            hit = free_neighbour(v);
        }
        if (hit < 0) {
            out.unrepaired.emplace_back(f, "path ended without contact");
            continue;
        }

        // Tangents from neighbouring chain positions.
        std::vector<Vec3> pts{term.pos};
        for (const auto& p : chain) pts.push_back(p.pos);
        pts.push_back(forest.nodes[hit].pos);
        int prev = f;
        for (std::size_t k = 0; k < chain.size(); ++k) {
            Particle p = chain[k];
            const Vec3 t = pts[k + 2] - pts[k];
            p.dir = t.norm() > 0.0 ? canonical_direction(t.normalized()) : term.dir;
            p.id = static_cast<int>(forest.nodes.size());
            forest.nodes.push_back(p);
            at_voxel[grid.index(grid.nearest_voxel(p.pos))] = p.id;
            degree.push_back(0);
            comps.add();
            forest.edges.emplace_back(std::min(prev, p.id), std::max(prev, p.id));
            ++degree[prev];
            ++degree[p.id];
            comps.unite(prev, p.id);
            prev = p.id;
        }
        forest.edges.emplace_back(std::min(prev, hit), std::max(prev, hit));
        ++degree[prev];
        ++degree[hit];
        comps.unite(prev, hit);
        out.added_particles += chain.size();
        out.repaired.push_back(f);
    }

    std::sort(forest.edges.begin(), forest.edges.end());
    for (auto& n : forest.nodes) n.kind = kind_for_degree(degree[n.id]);
    return out;
}

}  // namespace vtopo
