#include "vesseltopo/labels.hpp"

#include <fstream>
#include <sstream>

#include "vesseltopo/error.hpp"

namespace vtopo {

std::string to_string(VesselLabel label) {
    switch (label) {
        case VesselLabel::Artery: return "artery";
        case VesselLabel::Vein: return "vein";
    }
    throw InvalidArgument("invalid vessel label " + std::to_string(static_cast<int>(label)));
}

VesselLabel vessel_label_from_string(const std::string& s) {
    if (s == "artery") return VesselLabel::Artery;
    if (s == "vein") return VesselLabel::Vein;
    throw InvalidArgument("unknown vessel label '" + s + "' (expected artery or vein)");
}

std::string to_string(LabelStage stage) { return stage == LabelStage::Raw ? "raw" : "refined"; }

void save_labels(const LabelTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "#stage=" << to_string(table.stage) << '\n';
    for (std::size_t i = 0; i < table.size(); ++i) out << i << '\t' << to_string(table.labels[i]) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

LabelTable load_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    LabelTable table;
    std::vector<std::pair<long, VesselLabel>> rows;
    std::string line;
    int lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (line.rfind("#stage=", 0) == 0) {
            const std::string s = line.substr(7);
            if (s == "raw") {
                table.stage = LabelStage::Raw;
            } else if (s == "refined") {
                table.stage = LabelStage::Refined;
            } else {
                throw FormatError(where + ": unknown stage '" + s + "'");
            }
            header = true;
            continue;
        }
        if (line[0] == '#') continue;
        std::istringstream row(line);
        long id = -1;
        std::string label, extra;
        if (!(row >> id >> label) || (row >> extra)) throw FormatError(where + ": expected '<id>\\t<artery|vein>'");
        if (id < 0) throw FormatError(where + ": negative id");
        try {
            rows.emplace_back(id, vessel_label_from_string(label));
        } catch (const InvalidArgument& e) {
            throw FormatError(where + ": " + e.what());
        }
    }
    if (!header) throw FormatError(path.string() + ": missing '#stage=' header");
    table.labels.assign(rows.size(), VesselLabel::Artery);
    std::vector<std::uint8_t> filled(rows.size(), 0);
    for (const auto& [id, label] : rows) {
        if (static_cast<std::size_t>(id) >= rows.size()) {
            throw FormatError(path.string() + ": id " + std::to_string(id) + " outside 0.." +
                              std::to_string(rows.size() - 1));
        }
        if (filled[id]) throw FormatError(path.string() + ": duplicate id " + std::to_string(id));
        filled[id] = 1;
        table.labels[id] = label;
    }
    return table;
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::FullPipe: return "full_pipe";
        case Provenance::TerminalPipe: return "terminal_pipe";
        case Provenance::Merged: return "merged";
        case Provenance::Oracle: return "oracle";
    }
    throw InvalidArgument("invalid provenance");
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "full_pipe") return Provenance::FullPipe;
    if (s == "terminal_pipe") return Provenance::TerminalPipe;
    if (s == "merged") return Provenance::Merged;
    if (s == "oracle") return Provenance::Oracle;
    throw InvalidArgument("unknown provenance '" + s + "' (expected full_pipe, terminal_pipe, merged or oracle)");
}

}  // namespace vtopo
