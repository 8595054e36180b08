#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bcg {

enum class TemporalRole { kUnspecified, kT1, kT2 };

// H x W x C image. Storage is pixel-interleaved (the spectrum of one pixel is
// contiguous); the on-disk layout is band-sequential, see save_cube().
class HsiCube {
 public:
  HsiCube() = default;
  HsiCube(int height, int width, int bands, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int bands() const { return bands_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& at(int row, int col, int band) { return values_[index(row, col, band)]; }
  double at(int row, int col, int band) const { return values_[index(row, col, band)]; }

  std::span<double> pixel(int row, int col) {
    return {values_.data() + index(row, col, 0), static_cast<std::size_t>(bands_)};
  }
  std::span<const double> pixel(int row, int col) const {
    return {values_.data() + index(row, col, 0), static_cast<std::size_t>(bands_)};
  }
  // Pixel by linear row-major index.
  std::span<const double> pixel(std::size_t linear) const {
    return {values_.data() + linear * bands_, static_cast<std::size_t>(bands_)};
  }
  std::span<double> pixel(std::size_t linear) {
    return {values_.data() + linear * bands_, static_cast<std::size_t>(bands_)};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  TemporalRole role = TemporalRole::kUnspecified;

  bool operator==(const HsiCube& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           bands_ == other.bands_ && values_ == other.values_;
  }

 private:
  std::size_t index(int row, int col, int band) const {
    return (static_cast<std::size_t>(row) * width_ + col) * bands_ + band;
  }

  int height_ = 0;
  int width_ = 0;
  int bands_ = 0;
  std::vector<double> values_;
};

// Which constraints a producer guarantees for its abundance vectors.
enum class AbundanceProducer { kUnknown, kTruth, kFcls, kUuModule };

// H x W x K per-pixel abundance fractions; stored in an HsiCube with K bands.
struct AbundanceCube {
  HsiCube values;
  AbundanceProducer producer = AbundanceProducer::kUnknown;

  AbundanceCube() = default;
  AbundanceCube(int height, int width, int endmembers,
                AbundanceProducer p = AbundanceProducer::kUnknown)
      : values(height, width, endmembers), producer(p) {}

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  int endmembers() const { return values.bands(); }
};

inline constexpr std::int32_t kUnmatchedLabel = 255;

// Per-pixel label map: 0 = unchanged, >0 = change class. The optional
// probability layer holds P(changed) when the map came from a classifier.
class ChangeMap {
 public:
  ChangeMap() = default;
  ChangeMap(int height, int width, std::int32_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return labels_.size(); }

  std::int32_t& at(int row, int col) { return labels_[static_cast<std::size_t>(row) * width_ + col]; }
  std::int32_t at(int row, int col) const { return labels_[static_cast<std::size_t>(row) * width_ + col]; }
  std::int32_t& operator[](std::size_t i) { return labels_[i]; }
  std::int32_t operator[](std::size_t i) const { return labels_[i]; }

  std::span<const std::int32_t> labels() const { return labels_; }
  std::span<std::int32_t> labels() { return labels_; }

  std::vector<double> probability;

  bool operator==(const ChangeMap& other) const {
    return height_ == other.height_ && width_ == other.width_ && labels_ == other.labels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::int32_t> labels_;
};

// m x m x C neighbourhood around (row, col); pixel-interleaved like HsiCube.
struct Patch {
  int size = 0;
  int bands = 0;
  int row = 0;
  int col = 0;
  std::vector<double> values;

  double at(int i, int j, int band) const {
    return values[(static_cast<std::size_t>(i) * size + j) * bands + band];
  }
};

using HeaderFields = std::map<std::string, std::string>;

struct CubeFile {
  HsiCube cube;
  HeaderFields header;
  std::size_t negative_values = 0;
};

struct LabelFile {
  ChangeMap map;
  HeaderFields header;
};

// `path` may name the stem, the .hdr or the .bin file.
std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

// float32 little-endian band-sequential payload plus key=value header.
// Values are rounded to binary32 on write.
void save_cube(const HsiCube& cube, const std::filesystem::path& path,
               const HeaderFields& extra = {});
CubeFile read_cube(const std::filesystem::path& path);
HsiCube load_cube(const std::filesystem::path& path);

void save_label_map(const ChangeMap& map, const std::filesystem::path& path,
                    const HeaderFields& extra = {});
LabelFile read_label_map(const std::filesystem::path& path);
ChangeMap load_label_map(const std::filesystem::path& path);

void save_abundance(const AbundanceCube& abundance, const std::filesystem::path& path);
AbundanceCube load_abundance(const std::filesystem::path& path);

// Probability layer of a map saved as a one-band f32 cube with role=probability.
void save_probability(const ChangeMap& map, const std::filesystem::path& path);
std::vector<double> load_probability(const std::filesystem::path& path, int* height = nullptr,
                                     int* width = nullptr);

HsiCube concat_width(const HsiCube& left, const HsiCube& right);

// Mirror reflection without repeating the edge sample: index -1 maps to 1.
int reflect_index(int i, int n);
Patch extract_patch(const HsiCube& cube, int row, int col, int size);

// Index of the largest entry, lowest index on ties.
int dominant_class(std::span<const double> abundance);

// Whole-cube mean of squared values.
double signal_power(const HsiCube& cube);

// Adds white Gaussian noise with variance signal_power / 10^(snr_db / 10).
// An infinite snr_db returns the cube unchanged.
HsiCube add_noise_snr(const HsiCube& cube, double snr_db, std::uint64_t seed);

}  // namespace bcg
