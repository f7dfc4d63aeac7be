#include <doctest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "vesseltopo/synth.hpp"

using namespace vtopo;
namespace vt = vtopo::testing;

namespace {

constexpr auto A = VesselLabel::Artery;
constexpr auto V = VesselLabel::Vein;

SynthSpec small_spec(std::uint64_t seed, int depth = 3) {
    SynthSpec s;
    s.seed = seed;
    s.depth = depth;
    s.dims = {80, 72, 72};
    return s;
}

// Distance from p to segment [a, b] and the linearly interpolated radius at the foot point.
std::pair<double, double> tube_distance(const TubeSegment& s, const Vec3& p) {
    const Vec3 ab = s.end - s.start;
    double t = (p - s.start).dot(ab) / ab.squaredNorm();
    t = std::max(0.0, std::min(1.0, t));
    return {(p - s.start - t * ab).norm(), (1 - t) * s.start_radius + t * s.end_radius};
}

double angle_deg(const Vec3& a, const Vec3& b) {
    return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / M_PI;
}

TopologyForest single(const Vec3& pos, double scale) {
    auto f = vt::path_forest(1);
    f.nodes[0].pos = pos;
    f.nodes[0].scale = scale;
    return f;
}

}  // namespace

TEST_SUITE("synth-eval") {

TEST_CASE("validate rejects out-of-range fields") {
    CHECK_NOTHROW(validate(SynthSpec{}));
    const std::vector<std::pair<const char*, void (*)(SynthSpec&)>> bad{
        {"depth", [](SynthSpec& s) { s.depth = 0; }},
        {"radius_decay", [](SynthSpec& s) { s.radius_decay = 1.0; }},
        {"length_decay", [](SynthSpec& s) { s.length_decay = 0.0; }},
        {"trunk_length", [](SynthSpec& s) { s.trunk_length = -1.0; }},
        {"angles", [](SynthSpec& s) { s.min_angle_deg = 50.0; }},
        {"max_angle", [](SynthSpec& s) { s.max_angle_deg = 95.0; }},
        {"dims", [](SynthSpec& s) { s.dims = {0, 80, 80}; }},
        {"spacing", [](SynthSpec& s) { s.spacing = Vec3(1, 0, 1); }},
        {"thin terminals", [](SynthSpec& s) { s.depth = 9; }},
        {"attempts", [](SynthSpec& s) { s.max_attempts = 0; }},
    };
    for (const auto& [what, mutate] : bad) {
        CAPTURE(what);
        SynthSpec s;
        mutate(s);
        CHECK_THROWS_AS(validate(s), InvalidArgument);
        CHECK_THROWS_AS((void)generate(s), InvalidArgument);
    }
}

TEST_CASE("depth 1 gives one trunk per tree") {
    auto s = small_spec(3, 1);
    const auto c = generate(s);
    REQUIRE(c.segments.size() == 2);
    CHECK(c.segments[0].label != c.segments[1].label);
    CHECK(c.terminal_count() == 4);
    CHECK(c.bifurcation_count() == 0);
    for (const auto& seg : c.segments) {
        CHECK(seg.parent == -1);
        CHECK(seg.start_radius == doctest::Approx(s.trunk_radius));
        CHECK((seg.end - seg.start).norm() == doctest::Approx(s.trunk_length));
        const Vec3 root = seg.label == A ? c.artery_root : c.vein_root;
        CHECK((seg.start - root).norm() == 0.0);
    }
    CHECK(std::abs((c.artery_root - c.vein_root).x()) == doctest::Approx(s.intertwine_offset));
}

TEST_CASE("tree geometry follows the generator parameters") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto s = small_spec(seed, 4);
        const auto c = generate(s);
        CHECK(c.segments.size() == 2u * ((1u << s.depth) - 1));
        CHECK(c.terminal_count() == 2u * (1u << (s.depth - 1)) + 2u);
        CHECK(c.bifurcation_count() == 2u * ((1u << (s.depth - 1)) - 1));
        std::vector<int> children(c.segments.size(), 0);
        for (std::size_t i = 0; i < c.segments.size(); ++i) {
            const auto& seg = c.segments[i];
            const double r0 = s.trunk_radius * std::pow(s.radius_decay, seg.level);
            CHECK(seg.start_radius == doctest::Approx(r0));
            CHECK(seg.end_radius == doctest::Approx(r0 * s.radius_decay));
            CHECK((seg.end - seg.start).norm() ==
                  doctest::Approx(s.trunk_length * std::pow(s.length_decay, seg.level)));
            if (seg.parent < 0) continue;
            const auto& par = c.segments[seg.parent];
            ++children[seg.parent];
            CHECK(seg.level == par.level + 1);
            CHECK(seg.label == par.label);
            CHECK((seg.start - par.end).norm() < 1e-9);
            const double ang = angle_deg(seg.end - seg.start, par.end - par.start);
            CHECK(ang >= s.min_angle_deg - 1e-6);
            CHECK(ang <= s.max_angle_deg + 1e-6);
        }
        for (std::size_t i = 0; i < c.segments.size(); ++i) {
            CHECK(children[i] == (c.segments[i].level + 1 < s.depth ? 2 : 0));
        }
        // Terminal radius closed form: trunk * decay^depth.
        for (const auto& seg : c.segments) {
            if (seg.level == s.depth - 1) {
                CHECK(seg.end_radius == doctest::Approx(s.trunk_radius * std::pow(s.radius_decay, s.depth)));
            }
        }
    }
    // Default parameters: depth 5 would end at 5.2 * 2^(-5/3) = 1.64 mm.
    CHECK(SynthSpec{}.trunk_radius * std::pow(SynthSpec{}.radius_decay, 5) == doctest::Approx(1.6378).epsilon(1e-3));
}

TEST_CASE("segments keep their clearance and stay inside the volume") {
    const auto s = small_spec(9, 4);
    const auto c = generate(s);
    const Vec3 extent = c.mask.grid().to_world({s.dims.nx - 1, s.dims.ny - 1, s.dims.nz - 1});
    for (const auto& seg : c.segments) {
        for (const Vec3& p : {seg.start, seg.end}) {
            for (int a = 0; a < 3; ++a) {
                CHECK(p[a] >= 0.0);
                CHECK(p[a] <= extent[a]);
            }
        }
    }
    // Sampled surface gap between unrelated segments (sampling overestimates the gap by < 0.1 mm).
    const auto related = [&](std::size_t i, std::size_t j) {
        const auto& a = c.segments[i];
        const auto& b = c.segments[j];
        return a.parent == static_cast<int>(j) || b.parent == static_cast<int>(i) ||
               (a.parent >= 0 && a.parent == b.parent);
    };
    for (std::size_t i = 0; i < c.segments.size(); ++i)
        for (std::size_t j = i + 1; j < c.segments.size(); ++j) {
            if (related(i, j)) continue;
            double gap = 1e9;
            for (int u = 0; u <= 100; ++u) {
                const auto& a = c.segments[i];
                const Vec3 p = a.start + (u / 100.0) * (a.end - a.start);
                const double ra = a.start_radius + (u / 100.0) * (a.end_radius - a.start_radius);
                const auto [d, rb] = tube_distance(c.segments[j], p);
                gap = std::min(gap, d - ra - rb);
            }
            CHECK(gap >= s.clearance - 0.1);
        }
}

TEST_CASE("rasterization agrees with an independent distance oracle") {
    const auto c = generate(small_spec(4, 3));
    std::mt19937_64 rng(4);
    const auto& g = c.mask.grid();
    std::size_t checked = 0;
    for (int k = 0; k < 20000; ++k) {
        const std::size_t i = rng() % c.mask.size();
        const Vec3 p = g.to_world(g.voxel(i));
        double best = 1e9;
        VesselLabel label = A;
        bool inside = false;
        for (const auto& seg : c.segments) {
            const auto [d, r] = tube_distance(seg, p);
            inside = inside || d <= r;
            if (d <= r && d - r < best) {
                best = d - r;
                label = seg.label;
            }
        }
        CHECK(c.mask[i] == (inside ? 1 : 0));
        CHECK(c.truth[i] == (inside ? static_cast<int>(label) : 0));
        checked += inside;
    }
    CHECK(checked > 0);
    for (const auto& seg : c.segments) {
        const auto [d, r] = seg.distance_and_radius(seg.start);
        CHECK(d == 0.0);
        CHECK(r == seg.start_radius);
    }
}

TEST_CASE("generation is deterministic per seed") {
    const auto a = generate(small_spec(12, 3));
    const auto b = generate(small_spec(12, 3));
    const auto d = generate(small_spec(13, 3));
    CHECK(std::equal(a.mask.data().begin(), a.mask.data().end(), b.mask.data().begin()));
    CHECK(std::equal(a.truth.data().begin(), a.truth.data().end(), b.truth.data().begin()));
    REQUIRE(a.segments.size() == b.segments.size());
    for (std::size_t i = 0; i < a.segments.size(); ++i) CHECK(a.segments[i].end == b.segments[i].end);
    CHECK_FALSE(std::equal(a.mask.data().begin(), a.mask.data().end(), d.mask.data().begin()));
}

TEST_CASE("match_truth labels extracted particles by the nearest centerline") {
    const auto c = generate(small_spec(6, 3));
    const auto r = extract_topology(c.mask, nullptr, {c.artery_root, c.vein_root});
    const auto m = match_truth(r.forest, c);
    REQUIRE(m.labels.size() == r.forest.size());
    CHECK(m.unmatched_fraction() <= 0.05);
    std::size_t agree = 0;
    for (const auto& n : r.forest.nodes) {
        agree += c.truth.at(c.mask.grid().nearest_voxel(n.pos)) == static_cast<int>(m.labels.labels[n.id]);
    }
    CHECK(double(agree) / r.forest.size() >= 0.95);

    // Particles far from every tube are unmatched; too many raises.
    auto far = r.forest;
    for (auto& n : far.nodes) n.pos = Vec3(0, 0, 0);
    CHECK_THROWS_AS((void)match_truth(far, c), NumericalError);
}

TEST_CASE("reconstruct_labels: balls, nearest particle and monotone growth") {
    const Grid g{{21, 21, 21}};
    const auto one = reconstruct_labels(single(Vec3(10, 10, 10), 3.0), {{V}, LabelStage::Refined}, g);
    std::size_t count = 0;
    for (std::size_t i = 0; i < one.size(); ++i) {
        const double d = (g.to_world(g.voxel(i)) - Vec3(10, 10, 10)).norm();
        CHECK(one[i] == (d < 3.0 - 1e-4 ? 2 : 0));
        count += one[i] != 0;
    }
    // Lattice points with x^2 + y^2 + z^2 <= 8 (the 30 points at distance exactly 3 are excluded).
    CHECK(count == 93);

    const auto empty = reconstruct_labels(TopologyForest{}, LabelTable{}, g);
    CHECK(empty.grid().same_geometry(g));
    CHECK(count_foreground(empty) == 0);
    CHECK_THROWS_AS((void)reconstruct_labels(single(Vec3(1, 1, 1), 1), {{A, V}, LabelStage::Raw}, g), InvalidArgument);

    // Two overlapping balls: each voxel goes to the nearer center, ties to the smaller id.
    auto two = vt::make_forest({{8, 10, 10}, {12, 10, 10}}, {{0, 1}});
    two.nodes[0].scale = two.nodes[1].scale = 4.0;
    const auto lab = reconstruct_labels(two, {{A, V}, LabelStage::Raw}, g);
    CHECK(lab.at(9, 10, 10) == 1);
    CHECK(lab.at(10, 10, 10) == 1);
    CHECK(lab.at(11, 10, 10) == 2);

    // Growing every scale never unlabels a voxel.
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        auto f = vt::random_tree(rng, 12);
        LabelTable t;
        for (auto& n : f.nodes) {
            n.pos = g.to_world({vt::uniform_int(rng, 0, 20), vt::uniform_int(rng, 0, 20), vt::uniform_int(rng, 0, 20)});
            n.scale = vt::uniform_real(rng, 0.5, 3.0);
            t.labels.push_back(vt::uniform_int(rng, 0, 1) ? A : V);
        }
        const auto before = reconstruct_labels(f, t, g);
        for (auto& n : f.nodes) n.scale += vt::uniform_real(rng, 0.0, 1.0);
        const auto after = reconstruct_labels(f, t, g);
        for (std::size_t i = 0; i < before.size(); ++i) {
            if (before[i]) CHECK(after[i] != 0);
        }
    }
}

TEST_CASE("reconstruction of a synthetic case stays inside the mask") {
    const auto c = generate(small_spec(2, 3));
    const auto r = extract_topology(c.mask, nullptr, {c.artery_root, c.vein_root});
    const auto m = match_truth(r.forest, c);
    const auto lab = reconstruct_labels(r.forest, m.labels, c.mask.grid());
    std::size_t labeled = 0, inside = 0, correct = 0;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        if (!lab[i]) continue;
        ++labeled;
        inside += c.mask[i] != 0;
        correct += lab[i] == c.truth[i];
    }
    CHECK(labeled > 0);
    CHECK(inside == labeled);
    CHECK(double(correct) / labeled >= 0.95);
}

TEST_CASE("fuse_hilum fills background only") {
    MaskVolume lab(Dims{4, 1, 1});
    lab[0] = 1;
    lab[1] = 2;
    VesselMask ha(Dims{4, 1, 1}), hv(Dims{4, 1, 1});
    ha[1] = ha[2] = 1;
    hv[0] = hv[3] = 1;
    const auto fused = fuse_hilum(lab, ha, hv);
    CHECK(fused[0] == 1);
    CHECK(fused[1] == 2);
    CHECK(fused[2] == 1);
    CHECK(fused[3] == 2);

    hv[2] = 1;
    CHECK_THROWS_AS((void)fuse_hilum(lab, ha, hv), InvalidArgument);
    CHECK_THROWS_AS((void)fuse_hilum(lab, VesselMask(Dims{4, 1, 2}), hv), InvalidArgument);
    CHECK_THROWS_AS((void)fuse_hilum(lab, VesselMask(Dims{4, 1, 1}, Vec3(2, 1, 1)), hv), InvalidArgument);
}

TEST_CASE("evaluate: confusion identities") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = vt::uniform_int(rng, 0, 40);
        LabelTable p, t;
        std::vector<std::uint8_t> inc;
        for (int i = 0; i < n; ++i) {
            p.labels.push_back(vt::uniform_int(rng, 0, 1) ? A : V);
            t.labels.push_back(vt::uniform_int(rng, 0, 1) ? A : V);
            inc.push_back(static_cast<std::uint8_t>(vt::uniform_int(rng, 0, 1)));
        }
        const auto m = evaluate(p, t, inc);
        std::size_t included = 0, arteries = 0, agree = 0;
        for (int i = 0; i < n; ++i) {
            if (!inc[i]) continue;
            ++included;
            arteries += t.labels[i] == A;
            agree += p.labels[i] == t.labels[i];
        }
        CHECK(m.total() == included);
        CHECK(m.tp + m.fn == arteries);
        CHECK(m.tp + m.tn == agree);
        CHECK(m.accuracy == doctest::Approx(included ? double(agree) / included : 1.0));
        CHECK(m.sensitivity >= 0.0);
        CHECK(m.specificity <= 1.0);
        CHECK(evaluate(t, t).accuracy == 1.0);
    }
    const LabelTable t{{A, V, V}, LabelStage::Raw}, inv{{V, A, A}, LabelStage::Raw};
    const auto worst = evaluate(inv, t);
    CHECK(worst.accuracy == 0.0);
    CHECK(worst.sensitivity == 0.0);
    CHECK(worst.specificity == 0.0);
    const auto veins_only = evaluate(LabelTable{{V}, LabelStage::Raw}, LabelTable{{V}, LabelStage::Raw});
    CHECK(veins_only.sensitivity == 1.0);
    CHECK(veins_only.specificity == 1.0);
    CHECK_THROWS_AS((void)evaluate(t, inv, {1}), InvalidArgument);
    CHECK_THROWS_AS((void)evaluate(t, LabelTable{{A}, LabelStage::Raw}), InvalidArgument);
}

}  // TEST_SUITE
