#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "test_support.hpp"
#include "vesseltopo/distance.hpp"
#include "vesseltopo/filters.hpp"
#include "vesseltopo/forest_io.hpp"
#include "vesseltopo/synth.hpp"
#include "vesseltopo/topology.hpp"

using namespace vtopo;
namespace vt = vtopo::testing;

namespace {

// Flat-ended cylinder of radius r along x, y = z = c, x in [x0, x1].
VesselMask cylinder_x(Dims d, int x0, int x1, double c, double r) {
    VesselMask m(d);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto v = m.grid().voxel(i);
        if (v[0] >= x0 && v[0] <= x1 && std::hypot(v[1] - c, v[2] - c) <= r) m[i] = 1;
    }
    return m;
}

struct Extracted {
    DistanceMap dt;
    FloatVolume enhanced;
    TopologyForest forest;
};

Extracted extract(const VesselMask& m) {
    Extracted e{distance_transform(m), {}, {}};
    e.enhanced = vesselness_enhance(to_float(m), {1.0, 2.0, 3.0});
    e.forest = prune_spurs(build_graph(sample_particles(m, e.dt, e.enhanced), m.grid()));
    return e;
}

Particle particle_at(const Vec3& pos, double scale = 1.0, Vec3 dir = Vec3::UnitX()) {
    Particle p;
    p.pos = pos;
    p.scale = scale;
    p.dir = dir;
    return p;
}

using vt::component_count;
using vt::make_forest;
using vt::path_forest;
using vt::y_forest;

bool acyclic(const TopologyForest& f) { return f.edges.size() + component_count(f) == f.size(); }

}  // namespace

TEST_SUITE("topology") {

TEST_CASE("sampler: straight tube yields particles on the axis along most of its length") {
    const auto m = cylinder_x({40, 17, 17}, 4, 35, 8.0, 3.0);
    const auto dt = distance_transform(m);
    const auto parts = sample_particles(m, dt, to_float(m));
    int covered = 0, total = 0;
    for (int x = 4; x <= 35; ++x) {
        ++total;
        const bool hit = std::any_of(parts.begin(), parts.end(), [&](const Particle& p) {
            return std::abs(p.pos.x() - x) <= 0.5 && std::hypot(p.pos.y() - 8.0, p.pos.z() - 8.0) <= 1.0;
        });
        covered += hit;
    }
    CHECK(double(covered) / total >= 0.9);
}

TEST_CASE("sampler: a ball produces few ridge particles") {
    VesselMask m(Dims{25, 25, 25});
    for (std::size_t i = 0; i < m.size(); ++i) {
        if ((m.grid().to_world(m.grid().voxel(i)) - Vec3(12, 12, 12)).norm() <= 9.0) m[i] = 1;
    }
    std::size_t surface = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i]) continue;
        const auto v = m.grid().voxel(i);
        bool edge = false;
        for (int a = 0; a < 3; ++a)
            for (int s : {-1, 1}) {
                Voxel q = v;
                q[a] += s;
                edge = edge || !m.at(q);
            }
        surface += edge;
    }
    const auto dt = distance_transform(m);
    const auto parts = sample_particles(m, dt, to_float(m));
    CHECK(parts.size() <= 0.05 * surface);
}

TEST_CASE("sampler: particle contract on random masks") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 15; ++trial) {
        const Dims d{vt::uniform_int(rng, 8, 20), vt::uniform_int(rng, 8, 20), vt::uniform_int(rng, 8, 20)};
        auto m = vt::random_mask(rng, d, vt::uniform_real(rng, 0.4, 0.9));
        if (count_foreground(m) == 0 || count_foreground(m) == m.size()) continue;
        const auto dt = distance_transform(m);
        const float max_dt = *std::max_element(dt.data().begin(), dt.data().end());
        const auto parts = sample_particles(m, dt, to_float(m));
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const auto& p = parts[i];
            CHECK(p.id == static_cast<int>(i));
            CHECK(p.scale > 0.0);
            CHECK(p.scale <= max_dt);
            CHECK(std::abs(p.dir.norm() - 1.0) <= 1e-6);
            const Voxel v = m.grid().nearest_voxel(p.pos);
            CHECK((m.grid().to_world(v) - p.pos).norm() == 0.0);
            CHECK(m.at(v) == 1);
        }
    }
    CHECK_THROWS_AS((void)sample_particles(VesselMask(Dims{4, 4, 4}), DistanceMap(Dims{4, 4, 4}),
                                           FloatVolume(Dims{4, 4, 4})),
                    InvalidArgument);
}

TEST_CASE("build_graph: single particle and collinear triple") {
    const Grid g{{8, 8, 8}};
    const auto one = build_graph({particle_at({3, 3, 3})}, g);
    CHECK(one.edges.empty());
    CHECK(one.nodes[0].kind == NodeKind::Terminal);

    const auto three = build_graph({particle_at({2, 3, 3}), particle_at({3, 3, 3}), particle_at({4, 3, 3})}, g);
    CHECK(three.edges == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
    CHECK(three.nodes[0].kind == NodeKind::Terminal);
    CHECK(three.nodes[1].kind == NodeKind::Branching);
    CHECK(three.nodes[2].kind == NodeKind::Terminal);

    CHECK_THROWS_AS((void)build_graph({particle_at({2, 3, 3}), particle_at({2, 3, 3})}, g), InvalidArgument);
    CHECK_THROWS_AS((void)build_graph({particle_at({9, 3, 3})}, g), InvalidArgument);
}

TEST_CASE("build_graph: random particle sets respect the degree cap and the 26-neighbourhood") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        const Dims d{vt::uniform_int(rng, 3, 9), vt::uniform_int(rng, 3, 9), vt::uniform_int(rng, 3, 9)};
        const Grid g{d, Vec3(vt::uniform_real(rng, 0.5, 1.5), 1.0, vt::uniform_real(rng, 0.5, 2.0))};
        std::vector<Particle> parts;
        const double density = vt::uniform_real(rng, 0.1, 0.9);
        for (std::size_t i = 0; i < d.count(); ++i) {
            if (vt::uniform_real(rng, 0, 1) >= density) continue;
            Vec3 dir(vt::uniform_real(rng, -1, 1), vt::uniform_real(rng, -1, 1), vt::uniform_real(rng, -1, 1));
            if (dir.norm() < 1e-3) dir = Vec3::UnitX();
            parts.push_back(particle_at(g.to_world(g.voxel(i)), 1.0, canonical_direction(dir.normalized())));
        }
        const auto f = build_graph(parts, g);
        // Brute-force neighbour count from the edge list.
        std::vector<int> count(f.size(), 0);
        for (const auto& [a, b] : f.edges) {
            REQUIRE(a < b);
            ++count[a];
            ++count[b];
            const Voxel va = g.nearest_voxel(f.nodes[a].pos), vb = g.nearest_voxel(f.nodes[b].pos);
            for (int k = 0; k < 3; ++k) CHECK(std::abs(va[k] - vb[k]) <= 1);
        }
        for (const auto& n : f.nodes) {
            CHECK(count[n.id] <= 3);
            CHECK(n.kind == kind_for_degree(count[n.id]));
        }
        CHECK(std::is_sorted(f.edges.begin(), f.edges.end()));
        CHECK(acyclic(f));
        CHECK_NOTHROW(validate_forest(f));
    }
}

TEST_CASE("detect_false_terminals: true ends, deletion gaps and the volume boundary") {
    const auto m = cylinder_x({40, 17, 17}, 4, 35, 8.0, 3.0);
    auto e = extract(m);
    CHECK(detect_false_terminals(e.forest, m).empty());

    // Delete the particles of a 3-voxel stretch in the middle.
    std::vector<Particle> kept;
    for (const auto& n : e.forest.nodes) {
        if (std::abs(n.pos.x() - 20.0) > 1.5) kept.push_back(n);
    }
    const auto gap = build_graph(kept, m.grid());
    const auto flagged = detect_false_terminals(gap, m);
    int near_gap = 0;
    for (int id : flagged) near_gap += std::abs(gap.nodes[id].pos.x() - 20.0) < 4.0;
    CHECK(near_gap == 2);
    CHECK(flagged.size() == 2);

    // The outward ray of node 0 leaves the grid: out-of-bounds samples are background.
    VesselMask full(Dims{12, 12, 12}, Vec3(1, 1, 1), Vec3::Zero(), 1);
    const auto edge = make_forest({{1, 5, 5}, {2, 5, 5}, {3, 5, 5}}, {{0, 1}, {1, 2}});
    auto edge_scaled = edge;
    for (auto& n : edge_scaled.nodes) n.scale = 3.0;
    const auto fl = detect_false_terminals(edge_scaled, full);
    CHECK(std::find(fl.begin(), fl.end(), 0) == fl.end());
    CHECK(std::find(fl.begin(), fl.end(), 2) != fl.end());
}

TEST_CASE("repair: a 3-voxel skeleton gap is bridged into one component") {
    const auto m = cylinder_x({40, 17, 17}, 4, 35, 8.0, 3.0);
    auto e = extract(m);
    std::vector<Particle> kept;
    for (const auto& n : e.forest.nodes) {
        if (std::abs(n.pos.x() - 20.0) > 1.5) kept.push_back(n);
    }
    const auto gap = build_graph(kept, m.grid());
    REQUIRE(component_count(gap) == 2);
    const auto speed = speed_from_distance(e.dt);
    const auto out = repair(gap, detect_false_terminals(gap, m), speed, e.dt, &e.enhanced);
    CHECK(component_count(out.forest) == 1);
    CHECK(out.repaired.size() == 1);
    CHECK(out.added_particles >= 2);
    CHECK(acyclic(out.forest));
    CHECK_NOTHROW(validate_forest(out.forest));
    for (std::size_t i = gap.size(); i < out.forest.size(); ++i) {
        const auto& p = out.forest.nodes[i];
        CHECK(m.at(m.grid().nearest_voxel(p.pos)) == 1);
        CHECK(p.scale == doctest::Approx(e.dt.at(m.grid().nearest_voxel(p.pos))));
        CHECK(std::abs(p.dir.norm() - 1.0) < 1e-9);
    }

    const auto unchanged = repair(gap, {}, speed, e.dt);
    CHECK(unchanged.forest.edges == gap.edges);
    CHECK(unchanged.forest.size() == gap.size());
    CHECK_THROWS_AS((void)repair(gap, {static_cast<int>(gap.size())}, speed, e.dt), InvalidArgument);
}

TEST_CASE("repair: random oblique gaps keep the forest a degree-bounded tree") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 4; ++trial) {
        const Vec3 c(15.5, 15.5, 15.5);
        Vec3 u(vt::uniform_real(rng, -1, 1), vt::uniform_real(rng, -1, 1), vt::uniform_real(rng, -1, 1));
        u.normalize();
        const double r = vt::uniform_real(rng, 2.0, 3.5);
        const auto m = vt::tube_mask({32, 32, 32}, c - 12 * u, c + 12 * u, r);
        auto e = extract(m);
        std::vector<Particle> kept;
        for (const auto& n : e.forest.nodes) {
            if (std::abs((n.pos - c).dot(u)) > 1.5) kept.push_back(n);
        }
        const auto gap = build_graph(kept, m.grid());
        const auto out = repair(gap, detect_false_terminals(gap, m), speed_from_distance(e.dt), e.dt);
        CHECK(component_count(out.forest) == 1);
        CHECK(acyclic(out.forest));
        for (auto d : out.forest.degrees()) CHECK(d <= 3);
        const auto rooted = root_forest(out.forest);
        CHECK(rooted.roots.size() == component_count(rooted));
    }
}

TEST_CASE("root_forest: path, explicit roots and errors") {
    const auto path = root_forest(path_forest(5), {0});
    CHECK(path.roots == std::vector<int>{0});
    CHECK(path.parent == std::vector<int>{-1, 0, 1, 2, 3});

    // Two components with one root each: every node reaches exactly one root.
    auto two = make_forest({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {5, 0, 0}, {6, 0, 0}}, {{0, 1}, {1, 2}, {3, 4}});
    const auto rooted = root_forest(two, {2, 3});
    CHECK(rooted.roots == std::vector<int>{2, 3});
    for (const auto& n : rooted.nodes) {
        int cur = n.id, steps = 0;
        while (rooted.parent[cur] >= 0 && steps++ < 10) cur = rooted.parent[cur];
        CHECK((cur == 2 || cur == 3));
    }
    CHECK_THROWS_AS((void)root_forest(two, {7}), InvalidArgument);
    CHECK_THROWS_AS((void)root_forest(two, {0, 2}), InvalidArgument);

    // Auto mode picks the largest scale, ties to the smaller id.
    auto scaled = path_forest(4);
    scaled.nodes[1].scale = scaled.nodes[2].scale = 3.0;
    CHECK(root_forest(scaled).roots == std::vector<int>{1});
}

TEST_CASE("subtrees and branches on hand-made trees") {
    const auto y = root_forest(y_forest(), {0});
    const auto subs = extract_subtrees(y);
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].anchor == 1);
    CHECK(subs[0].members.size() == 7);

    // Root at the junction: three arms give three subtrees.
    const auto yj = root_forest(y_forest(), {3});
    const auto arms = extract_subtrees(yj);
    CHECK(arms.size() == 3);
    std::set<int> covered;
    for (const auto& s : arms) {
        for (int id : s.members) CHECK(covered.insert(id).second);
    }
    CHECK(covered.size() == 7);
    CHECK(!covered.count(3));

    const auto branches = extract_branches(y);
    REQUIRE(branches.size() == 3);
    CHECK(branches[0].ids == std::vector<int>{0, 1, 2, 3});
    CHECK(branches[0].start_kind == EndpointKind::Root);
    CHECK(branches[0].end_kind == EndpointKind::Bifurcation);
    const auto terminal = extract_terminal_branches(branches);
    CHECK(terminal.size() == 2);
    CHECK(terminal_branch_ids(branches) == std::vector<int>{4, 5, 6, 7});

    const auto path = root_forest(path_forest(6), {0});
    CHECK(extract_subtrees(path).size() == 1);
    const auto pb = extract_branches(path);
    REQUIRE(pb.size() == 1);
    CHECK(pb[0].ids.size() == 6);
    CHECK(pb[0].terminal());

    const auto lone = root_forest(path_forest(1));
    CHECK(extract_subtrees(lone).empty());
    CHECK(extract_branches(lone).empty());
}

TEST_CASE("partitions on random trees: subtrees cover non-roots, branches cover edges") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto f = vt::random_tree(rng, vt::uniform_int(rng, 2, 60));
        const int root = vt::uniform_int(rng, 0, static_cast<int>(f.size()) - 1);
        const auto r = root_forest(f, {root});
        std::vector<int> owner(r.size(), 0);
        for (const auto& s : extract_subtrees(r)) {
            for (int id : s.members) ++owner[id];
            CHECK(r.parent[s.anchor] == root);
        }
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(owner[i] == (static_cast<int>(i) == root ? 0 : 1));

        const auto branches = extract_branches(r);
        std::size_t edge_sum = 0;
        std::vector<int> owned(r.size(), 0);
        const auto deg = r.degrees();
        for (const auto& b : branches) {
            edge_sum += b.ids.size() - 1;
            for (std::size_t k = 1; k + 1 < b.ids.size(); ++k) CHECK(deg[b.ids[k]] == 2);
            for (int id : b.owned()) ++owned[id];
        }
        CHECK(edge_sum == r.edges.size());
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(owned[i] == (static_cast<int>(i) == root ? 0 : 1));
        const auto term = extract_terminal_branches(branches);
        CHECK(term.size() <= branches.size());
        for (const auto& b : term) CHECK(b.terminal());
    }
}

TEST_CASE("synthetic pair: fidelity, auto roots, subtree purity and determinism") {
    SynthSpec spec;
    spec.seed = 5;
    spec.depth = 3;
    spec.dims = {80, 72, 72};
    const auto c = generate(spec);
    const auto r = extract_topology(c.mask, nullptr, {c.artery_root, c.vein_root});
    CHECK_NOTHROW(validate_forest(r.forest));
    CHECK(r.forest.roots.size() == 2);
    CHECK(component_count(r.forest) == 2);

    const auto truth = match_truth(r.forest, c);
    CHECK(truth.unmatched_fraction() <= 0.05);
    for (const auto& s : extract_subtrees(r.forest)) {
        std::map<VesselLabel, int> votes;
        for (int id : s.members) ++votes[truth.labels.labels[id]];
        const int top = std::max(votes[VesselLabel::Artery], votes[VesselLabel::Vein]);
        CHECK(double(top) / s.members.size() >= 0.95);
    }
    const auto term_ids = terminal_branch_ids(extract_branches(r.forest));
    const double fraction = double(term_ids.size()) / r.forest.size();
    CHECK(fraction > 0.0);
    CHECK(fraction < 1.0);

    const auto autoroot = extract_topology(c.mask, nullptr);
    for (int root : autoroot.forest.roots) {
        const auto& n = autoroot.forest.nodes[root];
        const double d = std::min((n.pos - c.artery_root).norm(), (n.pos - c.vein_root).norm());
        CHECK(d <= 2.0 * n.scale);
    }
    CHECK(forest_to_json(autoroot.forest) ==
          forest_to_json(extract_topology(c.mask, nullptr).forest));
}

TEST_CASE("forest JSON round trip and malformed input") {
    auto f = root_forest(y_forest(), {0});
    f.nodes[2].intensity = 0.25;
    f.nodes[4].scale = 1.5;
    const auto text = forest_to_json(f);
    const auto back = forest_from_json(text);
    CHECK(forest_to_json(back) == text);
    CHECK(back.parent == f.parent);
    CHECK(text.find("\"kind\": \"bifurcation\"") != std::string::npos);

    vt::TempDir tmp("forest");
    save_forest(f, tmp / "f.json");
    CHECK(forest_to_json(load_forest(tmp / "f.json")) == text);

    CHECK_THROWS_AS((void)forest_from_json("{"), FormatError);
    CHECK_THROWS_AS((void)forest_from_json(R"({"nodes":[{"id":1}],"edges":[]})"), FormatError);
    auto cyc = text;
    cyc.replace(cyc.find("\"edges\": ["), 10, "\"edges\": [[0,7],");
    CHECK_THROWS_AS((void)forest_from_json(cyc), FormatError);
    CHECK_THROWS_AS((void)load_forest(tmp / "missing.json"), IoError);
}

}  // TEST_SUITE
