#include "vesseltopo/classify.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Geometry>

#include "json.hpp"
#include "vesseltopo/parallel.hpp"
#include "vesseltopo/rng.hpp"

namespace vtopo {
namespace {

using Json = nlohmann::ordered_json;

float swap_bytes(float v) {
    auto bytes = std::bit_cast<std::array<char, sizeof(float)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<float>(bytes);
}

bool inside_extent(const Grid& grid, const Vec3& p) {
    const Vec3 c = grid.to_continuous(p);
    return c.x() >= -0.5 && c.y() >= -0.5 && c.z() >= -0.5 && c.x() <= grid.dims.nx - 0.5 &&
           c.y() <= grid.dims.ny - 0.5 && c.z() <= grid.dims.nz - 0.5;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_channel(const std::filesystem::path& path, const std::vector<OrientedPatch>& patches) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    std::vector<float> buf;
    for (const auto& p : patches) {
        buf = p.values;
        if constexpr (std::endian::native == std::endian::big) {
            for (auto& v : buf) v = swap_bytes(v);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::string format_probability(double p) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), p);
    return std::string(buf, res.ptr);
}

}  // namespace

PatchBasis patch_basis(const Vec3& dir) {
    const Vec3 w = dir.normalized();
    Vec3 u = Vec3::UnitZ() - Vec3::UnitZ().dot(w) * w;
    if (u.norm() < 1e-6) u = Vec3::UnitX() - Vec3::UnitX().dot(w) * w;
    u.normalize();
    return {u, w.cross(u), w};
}

std::vector<OrientedPatch> extract_patches(const FloatVolume& volume, const TopologyForest& forest, double spacing_mm) {
    const double s = spacing_mm > 0.0 ? spacing_mm : volume.spacing().minCoeff();
    std::vector<OrientedPatch> out(forest.size());
    parallel_for(forest.size(), [&](std::size_t n) {
        const auto& node = forest.nodes[n];
        auto& patch = out[n];
        patch.id = node.id;
        patch.basis = patch_basis(node.dir);
        patch.values.assign(kPatchValues, 0.0f);
        if (!inside_extent(volume.grid(), node.pos)) {
            patch.out_of_bounds = true;
            return;
        }
        const auto& b = patch.basis;
        for (int k = 0; k < kPatchW; ++k)
            for (int j = 0; j < kPatchV; ++j)
                for (int i = 0; i < kPatchU; ++i) {
                    const Vec3 p = node.pos + s * ((i - 15.5) * b.u + (j - 15.5) * b.v + (k - 1) * b.w);
                    patch.values[(k * kPatchV + j) * kPatchU + i] = static_cast<float>(sample_trilinear(volume, p));
                }
    });
    return out;
}

void export_dataset(const std::filesystem::path& dir, const TopologyForest& forest,
                    const std::vector<OrientedPatch>& original, const std::vector<OrientedPatch>& enhanced,
                    const LabelTable* labels, double spacing_mm) {
    if (!forest.rooted()) throw InvalidArgument("export_dataset: forest must be rooted");
    for (const auto* channel : {&original, &enhanced}) {
        if (channel->size() != forest.size()) {
            throw InvalidArgument("export_dataset: " + std::to_string(channel->size()) + " patches for " +
                                  std::to_string(forest.size()) + " nodes");
        }
        for (std::size_t i = 0; i < channel->size(); ++i) {
            if ((*channel)[i].id != static_cast<int>(i) || (*channel)[i].values.size() != kPatchValues) {
                throw InvalidArgument("export_dataset: patch " + std::to_string(i) + " has id " +
                                      std::to_string((*channel)[i].id) + " or a wrong value count");
            }
        }
    }
    if (labels && labels->size() != forest.size()) {
        throw InvalidArgument("export_dataset: " + std::to_string(labels->size()) + " labels for " +
                              std::to_string(forest.size()) + " nodes");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    const auto terminal_ids = terminal_branch_ids(extract_branches(forest));
    std::vector<int> out_of_bounds;
    for (const auto& p : original) {
        if (p.out_of_bounds) out_of_bounds.push_back(p.id);
    }

    write_channel(dir / "patches_orig.bin", original);
    write_channel(dir / "patches_enh.bin", enhanced);
    write_text(dir / "neighbors.json", Json(forest.adjacency()).dump() + "\n");
    write_text(dir / "terminal_ids.json", Json(terminal_ids).dump() + "\n");
    const std::filesystem::path labels_path = dir / "labels.tsv";
    if (labels) {
        save_labels(*labels, labels_path);
    } else {
        std::filesystem::remove(labels_path, ec);
    }

    Json manifest{{"count", forest.size()},
                  {"terminal_count", terminal_ids.size()},
                  {"patch_shape", {kPatchU, kPatchV, kPatchW}},
                  {"patch_spacing_mm", spacing_mm},
                  {"value_order", "(k*32+j)*32+i; i along u, j along v, k along dir"},
                  {"dtype", "float32-le"},
                  {"channels", {{"orig", "patches_orig.bin"}, {"enh", "patches_enh.bin"}}},
                  {"neighbors", "neighbors.json"},
                  {"terminal_ids", "terminal_ids.json"},
                  {"labels", labels ? Json("labels.tsv") : Json(nullptr)},
                  {"provenance", labels ? "labeled" : "unlabeled"},
                  {"out_of_bounds_ids", out_of_bounds}};
    write_text(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<float> load_patch_channel(const std::filesystem::path& dir, const std::string& channel) {
    if (channel != "orig" && channel != "enh") throw InvalidArgument("unknown patch channel '" + channel + "'");
    const auto path = dir / ("patches_" + channel + ".bin");
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot read " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % (kPatchValues * sizeof(float)) != 0) {
        throw FormatError(path.string() + ": size " + std::to_string(bytes) + " is not a whole number of patches");
    }
    std::vector<float> values(bytes / sizeof(float));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : values) v = swap_bytes(v);
    }
    return values;
}

void save_probabilities(const ProbabilityTable& table, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "#provenance=" << to_string(table.provenance) << '\n';
    for (const auto& [id, p] : table.p) out << id << '\t' << format_probability(p) << '\n';
    write_text(path, out.str());
}

void check_coverage(const ProbabilityTable& table, std::size_t forest_size, const std::vector<int>& terminal_ids) {
    const std::string tag = to_string(table.provenance);
    if (table.provenance == Provenance::TerminalPipe) {
        const std::set<int> expected(terminal_ids.begin(), terminal_ids.end());
        for (const auto& [id, p] : table.p) {
            if (!expected.count(id)) {
                throw InvalidArgument(tag + " table holds id " + std::to_string(id) + " outside the terminal branches");
            }
        }
        for (int id : expected) {
            if (!table.p.count(id)) throw InvalidArgument(tag + " table misses terminal-branch id " + std::to_string(id));
        }
        return;
    }
    for (std::size_t id = 0; id < forest_size; ++id) {
        if (!table.p.count(static_cast<int>(id))) throw InvalidArgument(tag + " table misses id " + std::to_string(id));
    }
    if (table.p.size() != forest_size) {
        throw InvalidArgument(tag + " table holds id " + std::to_string(table.p.rbegin()->first) +
                              " beyond the forest size " + std::to_string(forest_size));
    }
}

ProbabilityTable ingest_probabilities(const std::filesystem::path& path, const TopologyForest& forest,
                                      Provenance expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read probability file " + path.string());
    ProbabilityTable table;
    bool header = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (line.rfind("#provenance=", 0) == 0) {
            try {
                table.provenance = provenance_from_string(line.substr(12));
            } catch (const InvalidArgument& e) {
                throw FormatError(where + ": " + e.what());
            }
            if (table.provenance != expected) {
                throw FormatError(where + ": provenance '" + to_string(table.provenance) + "' but '" +
                                  to_string(expected) + "' was expected");
            }
            header = true;
            continue;
        }
        if (line[0] == '#') continue;
        std::istringstream row(line);
        long id = -1;
        double p = 0.0;
        std::string extra;
        if (!(row >> id >> p) || (row >> extra)) throw FormatError(where + ": expected '<id>\\t<p_artery>'");
        if (id < 0 || static_cast<std::size_t>(id) >= forest.size()) {
            throw FormatError(where + ": unknown id " + std::to_string(id));
        }
        if (!(p >= 0.0 && p <= 1.0)) throw FormatError(where + ": p = " + format_probability(p) + " outside [0,1]");
        if (!table.p.emplace(static_cast<int>(id), p).second) {
            throw FormatError(where + ": duplicate id " + std::to_string(id));
        }
    }
    if (!header) throw FormatError(path.string() + ": missing '#provenance=' header");
    std::vector<int> terminal_ids;
    if (expected == Provenance::TerminalPipe) {
        if (!forest.rooted()) throw InvalidArgument("ingest_probabilities: terminal-pipe coverage needs a rooted forest");
        terminal_ids = terminal_branch_ids(extract_branches(forest));
    }
    try {
        check_coverage(table, forest.size(), terminal_ids);
    } catch (const InvalidArgument& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return table;
}

ProbabilityTable mutual_correct(const ProbabilityTable& full, const ProbabilityTable& terminal,
                                const std::vector<int>& terminal_ids) {
    if (full.provenance == Provenance::TerminalPipe) {
        throw InvalidArgument("mutual_correct: first table must cover every id, got a terminal-pipe table");
    }
    const std::size_t n = full.p.empty() ? 0 : static_cast<std::size_t>(full.p.rbegin()->first) + 1;
    check_coverage(full, n, {});
    ProbabilityTable term = terminal;
    term.provenance = Provenance::TerminalPipe;
    check_coverage(term, n, terminal_ids);
    ProbabilityTable out = full;
    out.provenance = Provenance::Merged;
    for (int id : terminal_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= n) {
            throw InvalidArgument("mutual_correct: terminal id " + std::to_string(id) + " outside the full table");
        }
        out.p[id] = 0.5 * (full.p.at(id) + term.p.at(id));
    }
    return out;
}

ProbabilityTable oracle_classifier(const LabelTable& truth, double flip_rate, std::uint64_t seed) {
    if (!(flip_rate >= 0.0 && flip_rate < 0.5)) {
        throw InvalidArgument("oracle_classifier: flip_rate " + format_probability(flip_rate) + " outside [0, 0.5)");
    }
    ProbabilityTable out;
    out.provenance = Provenance::Oracle;
    Rng rng(seed);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        double p = truth.labels[i] == VesselLabel::Artery ? 0.9 : 0.1;
        if (rng.bernoulli(flip_rate)) p = 1.0 - p;
        out.p.emplace(static_cast<int>(i), p);
    }
    return out;
}

}  // namespace vtopo
