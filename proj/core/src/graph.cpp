#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include "vesseltopo/topology.hpp"

namespace vtopo {
namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    int find(int x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
        return true;
    }

private:
    std::vector<int> parent_;
};

void assign_kinds(TopologyForest& forest) {
    const auto deg = forest.degrees();
    for (auto& n : forest.nodes) n.kind = kind_for_degree(deg[n.id]);
}

// Keeps the nodes flagged in `keep`, renumbering ids densely in order.
TopologyForest subset(const TopologyForest& forest, const std::vector<std::uint8_t>& keep) {
    std::vector<int> remap(forest.size(), -1);
    TopologyForest out;
    for (const auto& n : forest.nodes) {
        if (!keep[n.id]) continue;
        remap[n.id] = static_cast<int>(out.nodes.size());
        out.nodes.push_back(n);
        out.nodes.back().id = remap[n.id];
    }
    for (const auto& [a, b] : forest.edges) {
        if (remap[a] >= 0 && remap[b] >= 0) out.edges.emplace_back(remap[a], remap[b]);
    }
    std::sort(out.edges.begin(), out.edges.end());
    assign_kinds(out);
    return out;
}

}  // namespace

TopologyForest build_graph(std::vector<Particle> particles, const Grid& grid) {
    TopologyForest forest;
    forest.nodes = std::move(particles);
    const auto n = static_cast<int>(forest.nodes.size());
    std::unordered_map<std::size_t, int> at_voxel;
    for (int i = 0; i < n; ++i) {
        auto& p = forest.nodes[i];
        p.id = i;
        const Voxel v = grid.nearest_voxel(p.pos);
        if (!grid.dims.contains(v)) throw InvalidArgument("build_graph: particle " + std::to_string(i) + " outside grid");
        if (!at_voxel.emplace(grid.index(v), i).second) {
            throw InvalidArgument("build_graph: particles " + std::to_string(at_voxel[grid.index(v)]) + " and " +
                                  std::to_string(i) + " share a voxel");
        }
    }

    struct Candidate {
        double length;
        int a, b;
    };
    std::vector<Candidate> candidates;
    for (int i = 0; i < n; ++i) {
        const Voxel v = grid.nearest_voxel(forest.nodes[i].pos);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const Voxel q{v[0] + dx, v[1] + dy, v[2] + dz};
                    if (!grid.dims.contains(q)) continue;
                    const auto it = at_voxel.find(grid.index(q));
                    if (it == at_voxel.end() || it->second <= i) continue;
                    candidates.push_back({grid.spacing.cwiseProduct(Vec3(dx, dy, dz)).norm(), i, it->second});
                }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
        return std::tie(x.length, x.a, x.b) < std::tie(y.length, y.a, y.b);
    });
    DisjointSets sets(n);
    std::vector<std::vector<int>> adj(n);
    for (const auto& c : candidates) {
        if (!sets.unite(c.a, c.b)) continue;
        adj[c.a].push_back(c.b);
        adj[c.b].push_back(c.a);
    }

    for (int i = 0; i < n; ++i) {
        if (adj[i].size() <= 3) continue;
        const auto& p = forest.nodes[i];
        auto& list = adj[i];
        std::vector<std::pair<double, int>> ranked;
        for (int j : list) {
            const double align = std::abs((forest.nodes[j].pos - p.pos).normalized().dot(p.dir));
            ranked.emplace_back(-align, j);
        }
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t k = 3; k < ranked.size(); ++k) {
            const int j = ranked[k].second;
            list.erase(std::find(list.begin(), list.end(), j));
            auto& back = adj[j];
            back.erase(std::find(back.begin(), back.end(), i));
        }
    }

    for (int i = 0; i < n; ++i) {
        for (int j : adj[i]) {
            if (i < j) forest.edges.emplace_back(i, j);
        }
    }
    std::sort(forest.edges.begin(), forest.edges.end());
    assign_kinds(forest);
    return forest;
}

TopologyForest prune_spurs(const TopologyForest& input, double length_factor, std::size_t min_component) {
    TopologyForest forest = input;
    forest.roots.clear();
    forest.parent.clear();
    for (;;) {
        const auto adj = forest.adjacency();
        const auto deg = forest.degrees();
        // Spur chains grouped by the bifurcation they hang from.
        std::map<int, std::vector<std::pair<double, std::vector<int>>>> spurs;
        for (const auto& node : forest.nodes) {
            if (deg[node.id] != 1) continue;
            std::vector<int> chain{node.id};
            double length = 0.0;
            int prev = -1, cur = node.id;
            for (;;) {
                const int next = adj[cur][0] == prev ? adj[cur][1 % adj[cur].size()] : adj[cur][0];
                length += (forest.nodes[next].pos - forest.nodes[cur].pos).norm();
                prev = cur;
                cur = next;
                if (deg[cur] != 2) break;
                chain.push_back(cur);
            }
            if (deg[cur] < 3) continue;  // the whole component is a path
            if (length <= length_factor * forest.nodes[cur].scale) spurs[cur].emplace_back(length, std::move(chain));
        }
        std::vector<std::uint8_t> keep(forest.size(), 1);
        bool changed = false;
        for (auto& [hub, list] : spurs) {
            std::sort(list.begin(), list.end());
            std::size_t drop = list.size();
            // Never strip every arm of a junction.
            if (drop == deg[hub]) --drop;
            for (std::size_t k = 0; k < drop; ++k) {
                for (int id : list[k].second) keep[id] = 0;
                changed = true;
            }
        }
        if (!changed) break;
        forest = subset(forest, keep);
    }

    const auto comp = forest.components();
    std::vector<std::size_t> comp_size(forest.size(), 0);
    for (int c : comp) ++comp_size[c];
    std::vector<std::uint8_t> keep(forest.size(), 0);
    for (std::size_t i = 0; i < forest.size(); ++i) keep[i] = comp_size[comp[i]] >= min_component;
    return subset(forest, keep);
}

std::vector<int> detect_false_terminals(const TopologyForest& forest, const VesselMask& mask) {
    const auto adj = forest.adjacency();
    const auto& grid = mask.grid();
    std::vector<int> flagged;
    for (const auto& node : forest.nodes) {
        if (adj[node.id].size() > 1) continue;
        std::vector<Vec3> outward;
        if (adj[node.id].empty()) {
            outward = {node.dir, -node.dir};
        } else {
            const Vec3 away = node.pos - forest.nodes[adj[node.id][0]].pos;
            outward = {away.dot(node.dir) >= 0.0 ? node.dir : Vec3(-node.dir)};
        }
        bool on_mask = false;
        for (const auto& u : outward) {
            for (int k = 0; k <= 4 && !on_mask; ++k) {
                const double dist = (1.0 + 0.25 * k) * node.scale;
                const Voxel v = grid.nearest_voxel(node.pos + dist * u);
                on_mask = grid.dims.contains(v) && mask.at(v) != 0;
            }
        }
        if (on_mask) flagged.push_back(node.id);
    }
    return flagged;
}

}  // namespace vtopo
