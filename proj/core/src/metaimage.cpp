#include "vesseltopo/metaimage.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace vtopo {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <typename Number>
std::array<Number, 3> parse_triple(const std::map<std::string, std::string>& keys, const std::string& key,
                                   const std::filesystem::path& path) {
    const auto it = keys.find(key);
    if (it == keys.end()) {
        throw FormatError(path.string() + ": missing key '" + key + "'");
    }
    std::istringstream in(it->second);
    std::array<Number, 3> out{};
    for (auto& v : out) {
        if (!(in >> v)) {
            throw FormatError(path.string() + ": key '" + key + "' needs three numbers, got '" + it->second + "'");
        }
    }
    std::string rest;
    if (in >> rest) {
        throw FormatError(path.string() + ": key '" + key + "' has trailing values '" + it->second + "'");
    }
    return out;
}

template <typename T>
void read_payload(std::ifstream& in, std::vector<T>& out) {
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(T)));
    if constexpr (sizeof(T) > 1 && std::endian::native == std::endian::big) {
        for (auto& v : out) {
            auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
            std::reverse(bytes.begin(), bytes.end());
            v = std::bit_cast<T>(bytes);
        }
    }
}

template <typename T>
void write_payload(std::ofstream& out, std::span<const T> data) {
    if constexpr (sizeof(T) > 1 && std::endian::native == std::endian::big) {
        for (const auto& v : data) {
            auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
            std::reverse(bytes.begin(), bytes.end());
            out.write(bytes.data(), sizeof(T));
        }
    } else {
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    }
}

}  // namespace

AnyVolume load_volume(const std::filesystem::path& header_path) {
    std::ifstream header(header_path);
    if (!header) {
        throw IoError("cannot open MetaImage header '" + header_path.string() + "'");
    }

    std::map<std::string, std::string> keys;
    std::string line;
    int line_no = 0;
    while (std::getline(header, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(header_path.string() + ":" + std::to_string(line_no) + ": expected 'Key = Value'");
        }
        keys[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
    }

    if (auto it = keys.find("ObjectType"); it != keys.end() && it->second != "Image") {
        throw FormatError(header_path.string() + ": key 'ObjectType' must be Image, got '" + it->second + "'");
    }
    if (auto it = keys.find("NDims"); it == keys.end() || it->second != "3") {
        throw FormatError(header_path.string() + ": key 'NDims' must be 3");
    }

    const auto dim = parse_triple<long long>(keys, "DimSize", header_path);
    for (auto d : dim) {
        if (d <= 0 || d > (1LL << 30)) {
            throw FormatError(header_path.string() + ": key 'DimSize' out of range");
        }
    }
    const auto spacing = keys.contains("ElementSpacing") ? parse_triple<double>(keys, "ElementSpacing", header_path)
                                                         : std::array<double, 3>{1.0, 1.0, 1.0};
    const auto offset = keys.contains("Offset") ? parse_triple<double>(keys, "Offset", header_path)
                                                : std::array<double, 3>{0.0, 0.0, 0.0};
    for (auto s : spacing) {
        if (!(s > 0.0)) {
            throw FormatError(header_path.string() + ": key 'ElementSpacing' must be strictly positive");
        }
    }

    const auto type_it = keys.find("ElementType");
    if (type_it == keys.end()) {
        throw FormatError(header_path.string() + ": missing key 'ElementType'");
    }
    if (type_it->second != "MET_UCHAR" && type_it->second != "MET_FLOAT") {
        throw FormatError(header_path.string() + ": key 'ElementType' unsupported value '" + type_it->second + "'");
    }
    const auto file_it = keys.find("ElementDataFile");
    if (file_it == keys.end() || file_it->second.empty()) {
        throw FormatError(header_path.string() + ": missing key 'ElementDataFile'");
    }
    if (file_it->second == "LOCAL" || file_it->second == "LIST") {
        throw FormatError(header_path.string() + ": key 'ElementDataFile' must name a detached raw file");
    }

    Grid grid{Dims{static_cast<int>(dim[0]), static_cast<int>(dim[1]), static_cast<int>(dim[2])},
              Vec3(spacing[0], spacing[1], spacing[2]), Vec3(offset[0], offset[1], offset[2])};

    const auto raw_path = header_path.parent_path() / file_it->second;
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) {
        throw IoError("cannot open MetaImage payload '" + raw_path.string() + "'");
    }
    raw.seekg(0, std::ios::end);
    const auto actual = static_cast<std::uintmax_t>(raw.tellg());
    raw.seekg(0, std::ios::beg);

    const bool is_float = type_it->second == "MET_FLOAT";
    const std::uintmax_t expected = grid.dims.count() * (is_float ? sizeof(float) : sizeof(std::uint8_t));
    if (actual != expected) {
        throw FormatError(raw_path.string() + ": payload size " + std::to_string(actual) + " bytes, expected " +
                          std::to_string(expected));
    }

    if (is_float) {
        std::vector<float> data(grid.dims.count());
        read_payload(raw, data);
        return FloatVolume(grid, std::move(data));
    }
    std::vector<std::uint8_t> data(grid.dims.count());
    read_payload(raw, data);
    return MaskVolume(grid, std::move(data));
}

MaskVolume load_mask(const std::filesystem::path& header_path) {
    auto v = load_volume(header_path);
    if (auto* m = std::get_if<MaskVolume>(&v)) {
        return std::move(*m);
    }
    throw FormatError(header_path.string() + ": expected ElementType MET_UCHAR");
}

FloatVolume load_float_volume(const std::filesystem::path& header_path) {
    auto v = load_volume(header_path);
    if (auto* f = std::get_if<FloatVolume>(&v)) {
        return std::move(*f);
    }
    throw FormatError(header_path.string() + ": expected ElementType MET_FLOAT");
}

template <typename T>
void save_volume(const Volume<T>& v, const std::filesystem::path& header_path) {
    if (header_path.extension() != ".mhd") {
        throw InvalidArgument("MetaImage header path must end in .mhd: '" + header_path.string() + "'");
    }
    auto raw_path = header_path;
    raw_path.replace_extension(".raw");

    std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
    if (!raw) {
        throw IoError("cannot write MetaImage payload '" + raw_path.string() + "'");
    }
    write_payload<T>(raw, v.data());
    raw.close();
    if (!raw) {
        throw IoError("failed writing MetaImage payload '" + raw_path.string() + "'");
    }

    std::ofstream header(header_path, std::ios::trunc);
    if (!header) {
        throw IoError("cannot write MetaImage header '" + header_path.string() + "'");
    }
    const auto& g = v.grid();
    header << "ObjectType = Image\n"
           << "NDims = 3\n"
           << "DimSize = " << g.dims.nx << ' ' << g.dims.ny << ' ' << g.dims.nz << '\n'
           << "ElementSpacing = " << format_number(g.spacing.x()) << ' ' << format_number(g.spacing.y()) << ' '
           << format_number(g.spacing.z()) << '\n'
           << "Offset = " << format_number(g.origin.x()) << ' ' << format_number(g.origin.y()) << ' '
           << format_number(g.origin.z()) << '\n'
           << "ElementType = " << (Volume<T>::kind() == ElementKind::Float32 ? "MET_FLOAT" : "MET_UCHAR") << '\n'
           << "ElementDataFile = " << raw_path.filename().string() << '\n';
    header.close();
    if (!header) {
        throw IoError("failed writing MetaImage header '" + header_path.string() + "'");
    }
}

template void save_volume<std::uint8_t>(const MaskVolume&, const std::filesystem::path&);
template void save_volume<float>(const FloatVolume&, const std::filesystem::path&);

void save_volume(const AnyVolume& v, const std::filesystem::path& header_path) {
    std::visit([&](const auto& vol) { save_volume(vol, header_path); }, v);
}

}  // namespace vtopo
