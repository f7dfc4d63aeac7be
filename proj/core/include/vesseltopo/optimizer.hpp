#pragma once

#include <string>
#include <vector>

#include "vesseltopo/labels.hpp"
#include "vesseltopo/topology.hpp"

namespace vtopo {

enum class Strategy { Particle, Branch, Subtree, Combined };
[[nodiscard]] std::string to_string(Strategy s);
[[nodiscard]] Strategy strategy_from_string(const std::string& s);

/// Artery iff p > 0.5. The table must hold exactly the ids 0..forest_size-1.
[[nodiscard]] LabelTable threshold_labels(const ProbabilityTable& p, std::size_t forest_size);

struct Confidence {
    VesselLabel label = VesselLabel::Artery;
    double confidence = 1.0;  ///< max(nA, nV) / (nA + nV)
    std::size_t arteries = 0, veins = 0;
};

/// Per-subtree and per-branch majority, index-aligned with the inputs.
/// Branch counts use owned() ids. A tied branch takes its subtree's label at
/// 0.5; a tied subtree is artery at 0.5.
struct ConfidenceReport {
    std::vector<Confidence> subtrees;
    std::vector<Confidence> branches;
    std::vector<int> branch_subtree;  ///< subtree index of each branch
};

[[nodiscard]] ConfidenceReport score(const TopologyForest& forest, const std::vector<Subtree>& subtrees,
                                     const std::vector<Branch>& branches, const LabelTable& raw);

/// Particle keeps the raw labels, Branch sets every branch to its majority,
/// Subtree sets every subtree to its majority. Combined sets a branch to its
/// own majority only when it disagrees with the subtree and its confidence is
/// strictly higher, and to the subtree label otherwise. Root nodes keep
/// their raw label.
[[nodiscard]] LabelTable refine(const TopologyForest& forest, const std::vector<Subtree>& subtrees,
                                const std::vector<Branch>& branches, const LabelTable& raw,
                                const ConfidenceReport& report, Strategy strategy = Strategy::Combined);

/// Extracts subtrees and branches of the rooted forest, scores and refines.
[[nodiscard]] LabelTable refine_labels(const TopologyForest& forest, const LabelTable& raw,
                                       Strategy strategy = Strategy::Combined);

[[nodiscard]] std::string report_to_json(const ConfidenceReport& report, const std::vector<Subtree>& subtrees,
                                         const std::vector<Branch>& branches);

}  // namespace vtopo
