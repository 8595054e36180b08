#include "bcg/render.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bcg/error.hpp"

namespace bcg {

namespace {

constexpr Rgb kFixed[] = {
    {230, 25, 75},  {60, 180, 75},  {0, 130, 200},  {245, 130, 48},
    {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60},
    {250, 190, 190}, {0, 128, 128}, {170, 110, 40}, {128, 0, 0},
};
constexpr int kFixedCount = static_cast<int>(sizeof kFixed / sizeof kFixed[0]);

Rgb hsv(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  auto q = [&](double u) { return static_cast<std::uint8_t>(std::lround((u + m) * 255.0)); };
  return {q(r), q(g), q(b)};
}

const std::map<Rgb, std::int32_t>& reverse_palette() {
  static const std::map<Rgb, std::int32_t> table = [] {
    std::map<Rgb, std::int32_t> t;
    t[palette_color(0)] = 0;
    t[palette_color(kUnmatchedLabel)] = kUnmatchedLabel;
    for (std::int32_t l = 1; l <= kMaxPaletteClass; ++l) t.emplace(palette_color(l), l);
    return t;
  }();
  return table;
}

std::string netpbm_header(const char* magic, int width, int height) {
  std::ostringstream out;
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  return out.str();
}

struct Netpbm {
  int width = 0;
  int height = 0;
  std::size_t offset = 0;
};

Netpbm parse_header(const std::string& bytes, const char* magic) {
  std::istringstream in(bytes);
  std::string tag;
  int maxval = 0;
  Netpbm h;
  if (!(in >> tag) || tag != magic || !(in >> h.width >> h.height >> maxval) || maxval != 255 ||
      h.width < 1 || h.height < 1)
    fail(ErrorKind::kData, std::string("bad ") + magic + " header");
  in.get();
  h.offset = static_cast<std::size_t>(in.tellg());
  return h;
}

}  // namespace

Rgb palette_color(std::int32_t label) {
  if (label == 0) return {255, 255, 255};
  if (label == kUnmatchedLabel) return {0, 0, 0};
  require(label >= 1 && label <= kMaxPaletteClass, ErrorKind::kData,
          "label " + std::to_string(label) + " has no palette entry");
  if (label <= kFixedCount) return kFixed[label - 1];
  const int i = label - kFixedCount;
  constexpr double kGoldenAngle = 137.50776405003785;
  const double saturation = 0.55 + 0.15 * (i % 3);
  const double value = 0.65 + 0.1 * ((i / 3) % 3);
  return hsv(i * kGoldenAngle, saturation, value);
}

std::string encode_pgm(const ChangeMap& binary) {
  std::string out = netpbm_header("P5", binary.width(), binary.height());
  for (const auto v : binary.labels()) {
    require(v == 0 || v == 1, ErrorKind::kData,
            "binary render: label " + std::to_string(v) + " is not 0 or 1");
    out.push_back(static_cast<char>(v == 1 ? 255 : 0));
  }
  return out;
}

std::string encode_ppm(const ChangeMap& multiclass) {
  std::string out = netpbm_header("P6", multiclass.width(), multiclass.height());
  for (const auto v : multiclass.labels()) {
    const Rgb c = palette_color(v);
    out.append(reinterpret_cast<const char*>(c.data()), 3);
  }
  return out;
}

ChangeMap decode_pgm(const std::string& bytes) {
  const Netpbm h = parse_header(bytes, "P5");
  ChangeMap map(h.height, h.width);
  require(bytes.size() - h.offset == map.pixel_count(), ErrorKind::kData, "PGM size mismatch");
  for (std::size_t p = 0; p < map.pixel_count(); ++p) {
    const auto b = static_cast<unsigned char>(bytes[h.offset + p]);
    require(b == 0 || b == 255, ErrorKind::kData, "PGM value is not 0 or 255");
    map[p] = b == 255 ? 1 : 0;
  }
  return map;
}

ChangeMap decode_ppm(const std::string& bytes) {
  const Netpbm h = parse_header(bytes, "P6");
  ChangeMap map(h.height, h.width);
  require(bytes.size() - h.offset == 3 * map.pixel_count(), ErrorKind::kData, "PPM size mismatch");
  const auto& table = reverse_palette();
  for (std::size_t p = 0; p < map.pixel_count(); ++p) {
    Rgb c;
    for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>(bytes[h.offset + 3 * p + k]);
    const auto it = table.find(c);
    if (it == table.end()) fail(ErrorKind::kData, "PPM colour outside the palette");
    map[p] = it->second;
  }
  return map;
}

void render_map(const ChangeMap& map, RenderKind kind, const std::filesystem::path& path) {
  const std::string bytes = kind == RenderKind::kBinary ? encode_pgm(map) : encode_ppm(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace bcg
