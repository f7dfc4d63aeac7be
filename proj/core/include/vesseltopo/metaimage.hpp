#pragma once

#include <filesystem>

#include "vesseltopo/volume.hpp"

namespace vtopo {

/// Reads a MetaImage detached-header pair (.mhd + raw payload).
///
/// Supported keys: ObjectType = Image, NDims = 3, DimSize, ElementSpacing,
/// Offset, ElementType (MET_UCHAR | MET_FLOAT), ElementDataFile. The payload
/// is little-endian with x varying fastest. Unknown keys are ignored.
[[nodiscard]] AnyVolume load_volume(const std::filesystem::path& header_path);

/// Typed convenience wrappers; throw FormatError if the element type differs.
[[nodiscard]] MaskVolume load_mask(const std::filesystem::path& header_path);
[[nodiscard]] FloatVolume load_float_volume(const std::filesystem::path& header_path);

/// Writes `<stem>.mhd` and `<stem>.raw` next to each other. `header_path` must end in .mhd.
template <typename T>
void save_volume(const Volume<T>& v, const std::filesystem::path& header_path);

void save_volume(const AnyVolume& v, const std::filesystem::path& header_path);

}  // namespace vtopo
