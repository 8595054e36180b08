#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "bcg/hsi.hpp"

namespace bcg {

using Rgb = std::array<std::uint8_t, 3>;

// Largest class id with a palette entry; 255 is the unmatched sentinel.
inline constexpr std::int32_t kMaxPaletteClass = 254;

// 0 -> white, 255 -> black, 1..254 -> fixed distinct colours. The first
// twelve are hand-picked, the rest step the hue by the golden angle.
Rgb palette_color(std::int32_t label);

// P5, unchanged 0 and changed 255. Labels must be 0 or 1.
std::string encode_pgm(const ChangeMap& binary);
// P6 through palette_color().
std::string encode_ppm(const ChangeMap& multiclass);

ChangeMap decode_pgm(const std::string& bytes);
ChangeMap decode_ppm(const std::string& bytes);

enum class RenderKind { kBinary, kMulticlass };

void render_map(const ChangeMap& map, RenderKind kind, const std::filesystem::path& path);

}  // namespace bcg
