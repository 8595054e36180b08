#include "bcg/hsi.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "bcg/error.hpp"
#include "bcg/rng.hpp"

namespace bcg {

namespace fs = std::filesystem;

HsiCube::HsiCube(int height, int width, int bands, double fill)
    : height_(height), width_(width), bands_(bands) {
  require(height >= 1 && width >= 1 && bands >= 1, ErrorKind::kData,
          "cube dimensions must be positive");
  values_.assign(static_cast<std::size_t>(height) * width * bands, fill);
}

ChangeMap::ChangeMap(int height, int width, std::int32_t fill)
    : height_(height), width_(width) {
  require(height >= 1 && width >= 1, ErrorKind::kData, "map dimensions must be positive");
  labels_.assign(static_cast<std::size_t>(height) * width, fill);
}

namespace {

fs::path stem_of(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".hdr" || ext == ".bin") {
    fs::path p = path;
    p.replace_extension();
    return p;
  }
  return path;
}

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_header(const fs::path& path, int height, int width, int bands,
                  const std::string& dtype, const HeaderFields& extra) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write header " + path.string());
  out << "height=" << height << "\n"
      << "width=" << width << "\n"
      << "bands=" << bands << "\n"
      << "dtype=" << dtype << "\n"
      << "interleave=bsq\n";
  for (const auto& [key, value] : extra) {
    if (key == "height" || key == "width" || key == "bands" || key == "dtype" ||
        key == "interleave")
      continue;
    out << key << "=" << value << "\n";
  }
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

void write_payload(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write payload " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

struct RawFile {
  HeaderFields header;
  int height = 0;
  int width = 0;
  int bands = 0;
  std::string payload;
};

int parse_dim(const HeaderFields& header, const std::string& key, const fs::path& path) {
  const auto it = header.find(key);
  if (it == header.end()) fail(ErrorKind::kData, "header " + path.string() + " lacks " + key);
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size() || v < 1) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kData, "header " + path.string() + " has bad " + key + "=" + it->second);
  }
}

RawFile read_raw(const fs::path& path, const std::string& expected_dtype) {
  const fs::path hdr = header_path(path);
  std::ifstream in(hdr);
  if (!in) fail(ErrorKind::kIo, "unreadable header " + hdr.string());
  RawFile raw;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kData, "malformed header line '" + line + "'");
    raw.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  raw.height = parse_dim(raw.header, "height", hdr);
  raw.width = parse_dim(raw.header, "width", hdr);
  raw.bands = parse_dim(raw.header, "bands", hdr);
  const auto dtype = raw.header.find("dtype");
  if (dtype == raw.header.end() || dtype->second != expected_dtype)
    fail(ErrorKind::kData, "header " + hdr.string() + " dtype must be " + expected_dtype);
  const auto interleave = raw.header.find("interleave");
  if (interleave != raw.header.end() && interleave->second != "bsq")
    fail(ErrorKind::kData, "only interleave=bsq is supported");

  const fs::path bin = payload_path(path);
  std::ifstream payload(bin, std::ios::binary);
  if (!payload) fail(ErrorKind::kIo, "unreadable payload " + bin.string());
  std::ostringstream buffer;
  buffer << payload.rdbuf();
  raw.payload = std::move(buffer).str();
  const std::size_t expected =
      static_cast<std::size_t>(raw.height) * raw.width * raw.bands * 4;
  if (raw.payload.size() != expected) {
    fail(ErrorKind::kData, "size mismatch: " + bin.string() + " has " +
                               std::to_string(raw.payload.size()) + " bytes, expected " +
                               std::to_string(expected));
  }
  return raw;
}

}  // namespace

fs::path header_path(const fs::path& path) {
  fs::path p = stem_of(path);
  p += ".hdr";
  return p;
}

fs::path payload_path(const fs::path& path) {
  fs::path p = stem_of(path);
  p += ".bin";
  return p;
}

void save_cube(const HsiCube& cube, const fs::path& path, const HeaderFields& extra) {
  std::string bytes;
  bytes.reserve(cube.size() * 4);
  for (int b = 0; b < cube.bands(); ++b)
    for (int r = 0; r < cube.height(); ++r)
      for (int c = 0; c < cube.width(); ++c)
        put_u32le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(cube.at(r, c, b))));
  write_header(header_path(path), cube.height(), cube.width(), cube.bands(), "f32le", extra);
  write_payload(payload_path(path), bytes);
}

CubeFile read_cube(const fs::path& path) {
  RawFile raw = read_raw(path, "f32le");
  CubeFile file;
  file.header = std::move(raw.header);
  file.cube = HsiCube(raw.height, raw.width, raw.bands);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.payload.data());
  std::size_t linear = 0;
  for (int b = 0; b < raw.bands; ++b)
    for (int r = 0; r < raw.height; ++r)
      for (int c = 0; c < raw.width; ++c, ++linear) {
        const float v = std::bit_cast<float>(get_u32le(p + 4 * linear));
        if (!std::isfinite(v)) {
          fail(ErrorKind::kData, "non-finite value at payload index " + std::to_string(linear) +
                                     " (band " + std::to_string(b) + ", row " +
                                     std::to_string(r) + ", col " + std::to_string(c) + ")");
        }
        if (v < 0.0f) ++file.negative_values;
        file.cube.at(r, c, b) = v;
      }
  const auto role = file.header.find("temporal");
  if (role != file.header.end())
    file.cube.role = role->second == "t1"   ? TemporalRole::kT1
                     : role->second == "t2" ? TemporalRole::kT2
                                            : TemporalRole::kUnspecified;
  return file;
}

HsiCube load_cube(const fs::path& path) { return read_cube(path).cube; }

void save_label_map(const ChangeMap& map, const fs::path& path, const HeaderFields& extra) {
  std::string bytes;
  bytes.reserve(map.pixel_count() * 4);
  for (std::size_t i = 0; i < map.pixel_count(); ++i)
    put_u32le(bytes, static_cast<std::uint32_t>(map[i]));
  write_header(header_path(path), map.height(), map.width(), 1, "i32le", extra);
  write_payload(payload_path(path), bytes);
}

LabelFile read_label_map(const fs::path& path) {
  RawFile raw = read_raw(path, "i32le");
  require(raw.bands == 1, ErrorKind::kData, "label map must have bands=1");
  LabelFile file;
  file.header = std::move(raw.header);
  file.map = ChangeMap(raw.height, raw.width);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.payload.data());
  for (std::size_t i = 0; i < file.map.pixel_count(); ++i)
    file.map[i] = static_cast<std::int32_t>(get_u32le(p + 4 * i));
  return file;
}

ChangeMap load_label_map(const fs::path& path) { return read_label_map(path).map; }

namespace {

const char* producer_name(AbundanceProducer p) {
  switch (p) {
    case AbundanceProducer::kTruth: return "truth";
    case AbundanceProducer::kFcls: return "fcls";
    case AbundanceProducer::kUuModule: return "uu";
    case AbundanceProducer::kUnknown: break;
  }
  return "unknown";
}

AbundanceProducer producer_from(const std::string& s) {
  if (s == "truth") return AbundanceProducer::kTruth;
  if (s == "fcls") return AbundanceProducer::kFcls;
  if (s == "uu") return AbundanceProducer::kUuModule;
  return AbundanceProducer::kUnknown;
}

}  // namespace

void save_abundance(const AbundanceCube& abundance, const fs::path& path) {
  save_cube(abundance.values, path,
            {{"role", "abundance"}, {"producer", producer_name(abundance.producer)}});
}

AbundanceCube load_abundance(const fs::path& path) {
  CubeFile file = read_cube(path);
  const auto role = file.header.find("role");
  require(role != file.header.end() && role->second == "abundance", ErrorKind::kData,
          path.string() + " is not an abundance cube");
  AbundanceCube out;
  out.values = std::move(file.cube);
  const auto producer = file.header.find("producer");
  if (producer != file.header.end()) out.producer = producer_from(producer->second);
  return out;
}

void save_probability(const ChangeMap& map, const fs::path& path) {
  require(map.probability.size() == map.pixel_count(), ErrorKind::kData,
          "map has no probability layer");
  HsiCube cube(map.height(), map.width(), 1);
  for (std::size_t i = 0; i < map.pixel_count(); ++i) cube.values()[i] = map.probability[i];
  save_cube(cube, path, {{"role", "probability"}});
}

std::vector<double> load_probability(const fs::path& path, int* height, int* width) {
  CubeFile file = read_cube(path);
  require(file.cube.bands() == 1, ErrorKind::kData, "probability map must have bands=1");
  if (height) *height = file.cube.height();
  if (width) *width = file.cube.width();
  return {file.cube.values().begin(), file.cube.values().end()};
}

HsiCube concat_width(const HsiCube& left, const HsiCube& right) {
  require(left.height() == right.height() && left.bands() == right.bands(), ErrorKind::kData,
          "concat_width needs equal height and bands");
  HsiCube out(left.height(), left.width() + right.width(), left.bands());
  for (int r = 0; r < left.height(); ++r) {
    for (int c = 0; c < left.width(); ++c) {
      const auto src = left.pixel(r, c);
      std::copy(src.begin(), src.end(), out.pixel(r, c).begin());
    }
    for (int c = 0; c < right.width(); ++c) {
      const auto src = right.pixel(r, c);
      std::copy(src.begin(), src.end(), out.pixel(r, left.width() + c).begin());
    }
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Patch extract_patch(const HsiCube& cube, int row, int col, int size) {
  require(size % 2 == 1 && size >= 1, ErrorKind::kData, "patch size must be odd");
  require(size <= 2 * cube.height() - 1 && size <= 2 * cube.width() - 1, ErrorKind::kData,
          "patch larger than mirror padding allows");
  require(row >= 0 && row < cube.height() && col >= 0 && col < cube.width(), ErrorKind::kData,
          "patch centre outside the cube");
  Patch patch;
  patch.size = size;
  patch.bands = cube.bands();
  patch.row = row;
  patch.col = col;
  patch.values.resize(static_cast<std::size_t>(size) * size * cube.bands());
  const int half = size / 2;
  auto dst = patch.values.begin();
  for (int i = 0; i < size; ++i) {
    const int r = reflect_index(row - half + i, cube.height());
    for (int j = 0; j < size; ++j) {
      const int c = reflect_index(col - half + j, cube.width());
      const auto src = cube.pixel(r, c);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return patch;
}

int dominant_class(std::span<const double> abundance) {
  int best = 0;
  for (std::size_t i = 1; i < abundance.size(); ++i)
    if (abundance[i] > abundance[best]) best = static_cast<int>(i);
  return best;
}

double signal_power(const HsiCube& cube) {
  double sum = 0.0;
  for (const double v : cube.values()) sum += v * v;
  return cube.empty() ? 0.0 : sum / static_cast<double>(cube.size());
}

HsiCube add_noise_snr(const HsiCube& cube, double snr_db, std::uint64_t seed) {
  HsiCube out = cube;
  if (std::isinf(snr_db) && snr_db > 0) return out;
  const double variance = signal_power(cube) / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(variance);
  Rng rng = make_rng(seed, 0x6e6f697365ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.values()) v += sigma * normal(rng);
  return out;
}

}  // namespace bcg
