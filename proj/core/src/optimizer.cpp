#include "vesseltopo/optimizer.hpp"

#include <algorithm>

#include "json.hpp"

namespace vtopo {
namespace {

Confidence majority(const std::vector<int>& ids, const LabelTable& raw) {
    Confidence c;
    for (int id : ids) {
        if (raw.labels[id] == VesselLabel::Artery) {
            ++c.arteries;
        } else {
            ++c.veins;
        }
    }
    const std::size_t total = c.arteries + c.veins;
    if (total == 0) throw InvalidArgument("score: empty subtree or branch");
    c.label = c.arteries >= c.veins ? VesselLabel::Artery : VesselLabel::Vein;
    c.confidence = double(std::max(c.arteries, c.veins)) / double(total);
    return c;
}

}  // namespace

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Particle: return "particle";
        case Strategy::Branch: return "branch";
        case Strategy::Subtree: return "subtree";
        case Strategy::Combined: return "combined";
    }
    throw InvalidArgument("invalid strategy");
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "particle") return Strategy::Particle;
    if (s == "branch") return Strategy::Branch;
    if (s == "subtree") return Strategy::Subtree;
    if (s == "combined") return Strategy::Combined;
    throw InvalidArgument("unknown strategy '" + s + "' (expected particle, branch, subtree or combined)");
}

LabelTable threshold_labels(const ProbabilityTable& p, std::size_t forest_size) {
    if (p.p.size() != forest_size ||
        (forest_size > 0 && (p.p.begin()->first != 0 || p.p.rbegin()->first != static_cast<int>(forest_size) - 1))) {
        throw InvalidArgument("threshold_labels: probabilities must cover ids 0.." + std::to_string(forest_size) +
                              "-1 exactly");
    }
    LabelTable out;
    out.stage = LabelStage::Raw;
    out.labels.reserve(forest_size);
    for (const auto& [id, value] : p.p) out.labels.push_back(value > 0.5 ? VesselLabel::Artery : VesselLabel::Vein);
    return out;
}

ConfidenceReport score(const TopologyForest& forest, const std::vector<Subtree>& subtrees,
                       const std::vector<Branch>& branches, const LabelTable& raw) {
    if (raw.size() != forest.size()) {
        throw InvalidArgument("score: " + std::to_string(raw.size()) + " labels for " + std::to_string(forest.size()) +
                              " nodes");
    }
    ConfidenceReport report;
    std::vector<int> subtree_of(forest.size(), -1);
    for (std::size_t s = 0; s < subtrees.size(); ++s) {
        auto c = majority(subtrees[s].members, raw);
        if (c.arteries == c.veins) c.label = VesselLabel::Artery;
        report.subtrees.push_back(c);
        for (int id : subtrees[s].members) subtree_of[id] = static_cast<int>(s);
    }
    for (const auto& b : branches) {
        const auto owned = b.owned();
        if (owned.empty()) throw InvalidArgument("score: branch without owned nodes");
        const int s = subtree_of[owned.back()];
        if (s < 0) throw InvalidArgument("score: branch ending at node " + std::to_string(owned.back()) + " lies in no subtree");
        auto c = majority(owned, raw);
        if (c.arteries == c.veins) c.label = report.subtrees[s].label;
        report.branches.push_back(c);
        report.branch_subtree.push_back(s);
    }
    return report;
}

LabelTable refine(const TopologyForest& forest, const std::vector<Subtree>& subtrees,
                  const std::vector<Branch>& branches, const LabelTable& raw, const ConfidenceReport& report,
                  Strategy strategy) {
    if (report.subtrees.size() != subtrees.size() || report.branches.size() != branches.size() ||
        raw.size() != forest.size()) {
        throw InvalidArgument("refine: report, partitions and labels are inconsistent");
    }
    LabelTable out = raw;
    out.stage = LabelStage::Refined;
    switch (strategy) {
        case Strategy::Particle:
            break;
        case Strategy::Subtree:
            for (std::size_t s = 0; s < subtrees.size(); ++s) {
                for (int id : subtrees[s].members) out.labels[id] = report.subtrees[s].label;
            }
            break;
        case Strategy::Branch:
        case Strategy::Combined:
            for (std::size_t b = 0; b < branches.size(); ++b) {
                const auto& bc = report.branches[b];
                const auto& sc = report.subtrees[report.branch_subtree[b]];
                VesselLabel label = bc.label;
                if (strategy == Strategy::Combined && !(bc.label != sc.label && bc.confidence > sc.confidence)) {
                    label = sc.label;
                }
                for (int id : branches[b].owned()) out.labels[id] = label;
            }
            break;
    }
    return out;
}

LabelTable refine_labels(const TopologyForest& forest, const LabelTable& raw, Strategy strategy) {
    if (!forest.rooted()) throw InvalidArgument("refine: forest must be rooted");
    const auto subtrees = extract_subtrees(forest);
    const auto branches = extract_branches(forest);
    return refine(forest, subtrees, branches, raw, score(forest, subtrees, branches, raw), strategy);
}

std::string report_to_json(const ConfidenceReport& report, const std::vector<Subtree>& subtrees,
                           const std::vector<Branch>& branches) {
    using Json = nlohmann::ordered_json;
    auto entry = [](const Confidence& c) {
        return Json{{"label", to_string(c.label)},
                    {"confidence", c.confidence},
                    {"arteries", c.arteries},
                    {"veins", c.veins},
                    {"count", c.arteries + c.veins}};
    };
    Json js = Json::array();
    for (std::size_t s = 0; s < subtrees.size(); ++s) {
        Json e{{"anchor", subtrees[s].anchor}, {"root", subtrees[s].root}};
        e.update(entry(report.subtrees[s]));
        js.push_back(e);
    }
    Json jb = Json::array();
    for (std::size_t b = 0; b < branches.size(); ++b) {
        Json e{{"first", branches[b].ids.front()},
               {"last", branches[b].ids.back()},
               {"start_kind", to_string(branches[b].start_kind)},
               {"end_kind", to_string(branches[b].end_kind)},
               {"subtree", report.branch_subtree[b]}};
        e.update(entry(report.branches[b]));
        jb.push_back(e);
    }
    return Json{{"subtrees", js}, {"branches", jb}}.dump(1) + "\n";
}

}  // namespace vtopo
