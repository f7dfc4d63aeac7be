#include "vesseltopo/forest_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace vtopo {
namespace {

using Json = nlohmann::ordered_json;

Json triple(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 read_triple(const Json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw FormatError("forest: '" + what + "' must be an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string forest_to_json(const TopologyForest& forest) {
    Json nodes = Json::array();
    for (const auto& n : forest.nodes) {
        nodes.push_back({{"id", n.id},
                         {"pos", triple(n.pos)},
                         {"scale", n.scale},
                         {"dir", triple(n.dir)},
                         {"intensity", n.intensity},
                         {"kind", to_string(n.kind)}});
    }
    Json edges = Json::array();
    for (const auto& [a, b] : forest.edges) edges.push_back({a, b});
    Json doc{{"nodes", nodes}, {"edges", edges}, {"roots", forest.roots}};
    return doc.dump(1) + "\n";
}

TopologyForest forest_from_json(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw FormatError(std::string("forest: ") + e.what());
    }
    TopologyForest forest;
    try {
        for (const auto& jn : doc.at("nodes")) {
            Particle p;
            p.id = jn.at("id").get<int>();
            if (p.id != static_cast<int>(forest.nodes.size())) {
                throw FormatError("forest: node ids must be dense and in order, found " + std::to_string(p.id) +
                                  " at position " + std::to_string(forest.nodes.size()));
            }
            p.pos = read_triple(jn.at("pos"), "pos");
            p.scale = jn.at("scale").get<double>();
            p.dir = read_triple(jn.at("dir"), "dir");
            p.intensity = jn.at("intensity").get<double>();
            try {
                p.kind = node_kind_from_string(jn.at("kind").get<std::string>());
            } catch (const InvalidArgument& e) {
                throw FormatError(std::string("forest: ") + e.what());
            }
            forest.nodes.push_back(p);
        }
        for (const auto& je : doc.at("edges")) {
            if (!je.is_array() || je.size() != 2) throw FormatError("forest: edges must be [i, j] pairs");
            const int a = je[0].get<int>(), b = je[1].get<int>();
            forest.edges.emplace_back(std::min(a, b), std::max(a, b));
        }
        if (doc.contains("roots")) forest.roots = doc.at("roots").get<std::vector<int>>();
    } catch (const Json::exception& e) {
        throw FormatError(std::string("forest: ") + e.what());
    }
    std::sort(forest.edges.begin(), forest.edges.end());
    try {
        if (!forest.roots.empty()) {
            const auto roots = forest.roots;
            forest = root_forest(std::move(forest), roots);
        }
        validate_forest(forest);
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("forest: ") + e.what());
    }
    return forest;
}

void save_forest(const TopologyForest& forest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << forest_to_json(forest);
    if (!out) throw IoError("write failed: " + path.string());
}

TopologyForest load_forest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return forest_from_json(text.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace vtopo
