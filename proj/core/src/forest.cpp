#include <algorithm>
#include <deque>
#include <numeric>

#include "vesseltopo/topology.hpp"

namespace vtopo {

std::string to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::Terminal: return "terminal";
        case NodeKind::Branching: return "branching";
        case NodeKind::Bifurcation: return "bifurcation";
    }
    return "unknown";
}

NodeKind node_kind_from_string(const std::string& s) {
    if (s == "terminal") return NodeKind::Terminal;
    if (s == "branching") return NodeKind::Branching;
    if (s == "bifurcation") return NodeKind::Bifurcation;
    throw InvalidArgument("unknown node kind '" + s + "'");
}

NodeKind kind_for_degree(std::size_t degree) {
    if (degree <= 1) return NodeKind::Terminal;
    if (degree == 2) return NodeKind::Branching;
    return NodeKind::Bifurcation;
}

std::string to_string(EndpointKind kind) {
    switch (kind) {
        case EndpointKind::Root: return "root";
        case EndpointKind::Terminal: return "terminal";
        case EndpointKind::Bifurcation: return "bifurcation";
    }
    return "unknown";
}

Vec3 canonical_direction(const Vec3& dir) {
    Eigen::Index axis = 0;
    dir.cwiseAbs().maxCoeff(&axis);
    return dir[axis] < 0.0 ? Vec3(-dir) : dir;
}

std::vector<std::vector<int>> TopologyForest::adjacency() const {
    std::vector<std::vector<int>> adj(nodes.size());
    for (const auto& [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
}

std::vector<std::size_t> TopologyForest::degrees() const {
    std::vector<std::size_t> deg(nodes.size(), 0);
    for (const auto& [a, b] : edges) {
        ++deg[a];
        ++deg[b];
    }
    return deg;
}

std::vector<int> TopologyForest::components() const {
    const auto adj = adjacency();
    std::vector<int> label(nodes.size(), -1);
    int next = 0;
    for (std::size_t s = 0; s < nodes.size(); ++s) {
        if (label[s] >= 0) continue;
        std::vector<int> stack{static_cast<int>(s)};
        label[s] = next;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : adj[u]) {
                if (label[v] < 0) {
                    label[v] = next;
                    stack.push_back(v);
                }
            }
        }
        ++next;
    }
    return label;
}

std::vector<std::vector<int>> TopologyForest::children() const {
    std::vector<std::vector<int>> out(nodes.size());
    for (std::size_t i = 0; i < parent.size(); ++i) {
        if (parent[i] >= 0) out[parent[i]].push_back(static_cast<int>(i));
    }
    return out;
}

int nearest_node(const TopologyForest& forest, const Vec3& pos) {
    if (forest.nodes.empty()) throw InvalidArgument("nearest_node: empty forest");
    int best = 0;
    double best_d = (forest.nodes[0].pos - pos).squaredNorm();
    for (const auto& n : forest.nodes) {
        const double d = (n.pos - pos).squaredNorm();
        if (d < best_d) {
            best = n.id;
            best_d = d;
        }
    }
    return best;
}

void validate_forest(const TopologyForest& forest) {
    const auto n = static_cast<int>(forest.nodes.size());
    for (int i = 0; i < n; ++i) {
        const auto& p = forest.nodes[i];
        if (p.id != i) throw InvalidArgument("forest: node at index " + std::to_string(i) + " has id " + std::to_string(p.id));
        if (!(p.scale > 0.0)) throw InvalidArgument("forest: node " + std::to_string(i) + " has non-positive scale");
        if (std::abs(p.dir.norm() - 1.0) > 1e-6) {
            throw InvalidArgument("forest: node " + std::to_string(i) + " direction is not unit length");
        }
    }
    for (std::size_t e = 0; e < forest.edges.size(); ++e) {
        const auto [a, b] = forest.edges[e];
        if (a < 0 || b >= n || a >= b) {
            throw InvalidArgument("forest: malformed edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
        }
        if (e > 0 && !(forest.edges[e - 1] < forest.edges[e])) {
            throw InvalidArgument("forest: edges not sorted and unique at (" + std::to_string(a) + "," +
                                  std::to_string(b) + ")");
        }
    }
    const auto deg = forest.degrees();
    for (int i = 0; i < n; ++i) {
        if (deg[i] > 3) throw InvalidArgument("forest: node " + std::to_string(i) + " has degree " + std::to_string(deg[i]));
        if (forest.nodes[i].kind != kind_for_degree(deg[i])) {
            throw InvalidArgument("forest: node " + std::to_string(i) + " kind does not match degree");
        }
    }
    const auto comp = forest.components();
    const int comp_count = n == 0 ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
    if (forest.edges.size() + comp_count != static_cast<std::size_t>(n)) {
        throw InvalidArgument("forest: graph contains a cycle");
    }
    if (!forest.rooted()) return;
    if (forest.parent.size() != forest.nodes.size()) throw InvalidArgument("forest: parent map size mismatch");
    std::vector<int> roots_per_comp(comp_count, 0);
    for (int r : forest.roots) {
        if (r < 0 || r >= n) throw InvalidArgument("forest: root " + std::to_string(r) + " is not a node");
        if (forest.parent[r] != -1) throw InvalidArgument("forest: root " + std::to_string(r) + " has a parent");
        ++roots_per_comp[comp[r]];
    }
    for (int c = 0; c < comp_count; ++c) {
        if (roots_per_comp[c] != 1) throw InvalidArgument("forest: component without exactly one root");
    }
}

TopologyForest root_forest(TopologyForest forest, const std::vector<int>& roots) {
    const auto n = static_cast<int>(forest.nodes.size());
    const auto comp = forest.components();
    const int comp_count = n == 0 ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
    std::vector<int> chosen(comp_count, -1);
    for (int r : roots) {
        if (r < 0 || r >= n) throw InvalidArgument("root_forest: root id " + std::to_string(r) + " not in forest");
        if (chosen[comp[r]] >= 0 && chosen[comp[r]] != r) {
            throw InvalidArgument("root_forest: roots " + std::to_string(chosen[comp[r]]) + " and " +
                                  std::to_string(r) + " share a component");
        }
        chosen[comp[r]] = r;
    }
    for (int i = 0; i < n; ++i) {
        int& c = chosen[comp[i]];
        if (c < 0 || (!std::count(roots.begin(), roots.end(), c) && forest.nodes[i].scale > forest.nodes[c].scale)) {
            c = i;
        }
    }

    const auto adj = forest.adjacency();
    forest.parent.assign(n, -1);
    forest.roots.assign(chosen.begin(), chosen.end());
    std::sort(forest.roots.begin(), forest.roots.end());
    std::vector<std::uint8_t> seen(n, 0);
    for (int r : forest.roots) {
        std::deque<int> queue{r};
        seen[r] = 1;
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (int v : adj[u]) {
                if (seen[v]) continue;
                seen[v] = 1;
                forest.parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    return forest;
}

std::vector<Subtree> extract_subtrees(const TopologyForest& forest) {
    if (!forest.rooted()) throw InvalidArgument("extract_subtrees: forest is not rooted");
    const auto kids = forest.children();
    std::vector<Subtree> out;
    for (int r : forest.roots) {
        for (int anchor : kids[r]) {
            Subtree s{anchor, r, {}};
            std::vector<int> stack{anchor};
            while (!stack.empty()) {
                const int u = stack.back();
                stack.pop_back();
                s.members.push_back(u);
                stack.insert(stack.end(), kids[u].begin(), kids[u].end());
            }
            std::sort(s.members.begin(), s.members.end());
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<Branch> extract_branches(const TopologyForest& forest) {
    if (!forest.rooted()) throw InvalidArgument("extract_branches: forest is not rooted");
    const auto kids = forest.children();
    const auto deg = forest.degrees();
    std::vector<std::uint8_t> is_root(forest.size(), 0);
    for (int r : forest.roots) is_root[r] = 1;
    auto endpoint_kind = [&](int id) {
        if (is_root[id]) return EndpointKind::Root;
        return deg[id] <= 1 ? EndpointKind::Terminal : EndpointKind::Bifurcation;
    };
    auto is_endpoint = [&](int id) { return is_root[id] || deg[id] != 2; };

    std::vector<Branch> out;
    for (std::size_t s = 0; s < forest.size(); ++s) {
        const int start = static_cast<int>(s);
        if (!is_endpoint(start)) continue;
        for (int child : kids[start]) {
            Branch b;
            b.ids = {start, child};
            int cur = child;
            while (!is_endpoint(cur)) {
                cur = kids[cur].front();
                b.ids.push_back(cur);
            }
            b.start_kind = endpoint_kind(start);
            b.end_kind = endpoint_kind(cur);
            out.push_back(std::move(b));
        }
    }
    std::sort(out.begin(), out.end(), [](const Branch& a, const Branch& b) {
        return std::tie(a.ids[0], a.ids[1]) < std::tie(b.ids[0], b.ids[1]);
    });
    return out;
}

std::vector<Branch> extract_terminal_branches(const std::vector<Branch>& branches) {
    std::vector<Branch> out;
    std::copy_if(branches.begin(), branches.end(), std::back_inserter(out), [](const Branch& b) { return b.terminal(); });
    return out;
}

std::vector<int> terminal_branch_ids(const std::vector<Branch>& branches) {
    std::vector<int> ids;
    for (const auto& b : branches) {
        if (!b.terminal()) continue;
        const auto owned = b.owned();
        ids.insert(ids.end(), owned.begin(), owned.end());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

}  // namespace vtopo
