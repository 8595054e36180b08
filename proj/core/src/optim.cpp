#include "bcg/optim.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "bcg/error.hpp"
#include "bcg/rng.hpp"

namespace bcg::ad {

namespace fs = std::filesystem;

Tensor he_normal_init(const Shape& shape, int fan_in, std::uint64_t seed) {
  require(fan_in > 0, ErrorKind::kUsage, "he_normal_init: fan_in must be positive");
  Tensor out(shape);
  Rng rng = make_rng(seed, 0x6865ULL);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = normal(rng);
  return out;
}

AdamState adam_init(std::span<Parameter* const> params) {
  AdamState state;
  for (const Parameter* p : params) {
    state.m.emplace_back(p->value.shape(), 0.0);
    state.v.emplace_back(p->value.shape(), 0.0);
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& config) {
  require(params.size() == grads.size() && params.size() == state.m.size(), ErrorKind::kData,
          "adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].size() == params[i]->value.size(), ErrorKind::kData,
            "adam_step: gradient shape mismatch for " + params[i]->name);
    for (const double g : grads[i].values())
      if (!std::isfinite(g))
        fail(ErrorKind::kNumeric, "non-finite gradient in layer " + params[i]->name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i]->value;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j] + config.weight_decay * w[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

namespace {

fs::path payload_of(const fs::path& path) {
  fs::path p = path;
  p += ".bin";
  return p;
}

struct ManifestEntry {
  std::string name;
  std::string kind;
  Shape shape;
};

struct Manifest {
  CheckpointMeta meta;
  std::vector<ManifestEntry> entries;
};

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read checkpoint " + path.string());
  Manifest out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("param ", 0) == 0) {
      std::istringstream fields(line.substr(6));
      ManifestEntry e;
      std::string shape;
      if (!(fields >> e.name >> e.kind >> shape))
        fail(ErrorKind::kData, "bad checkpoint line '" + line + "'");
      std::istringstream dims(shape);
      std::string d;
      while (std::getline(dims, d, 'x')) e.shape.push_back(std::stoi(d));
      out.entries.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kData, "bad checkpoint line '" + line + "'");
    out.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace

void save_checkpoint(std::span<const Parameter* const> params, const CheckpointMeta& meta,
                     const fs::path& path) {
  std::ofstream manifest(path, std::ios::trunc);
  if (!manifest) fail(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  for (const auto& [key, value] : meta) manifest << key << '=' << value << '\n';
  std::string payload;
  for (const Parameter* p : params) {
    manifest << "param " << p->name << ' ' << p->kind << ' ' << shape_string(p->value.shape())
             << '\n';
    for (const double v : p->value.values()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  if (!manifest) fail(ErrorKind::kIo, "write failed for " + path.string());
  std::ofstream bin(payload_of(path), std::ios::binary | std::ios::trunc);
  if (!bin) fail(ErrorKind::kIo, "cannot write " + payload_of(path).string());
  bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!bin) fail(ErrorKind::kIo, "write failed for " + payload_of(path).string());
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) { return read_manifest(path).meta; }

CheckpointMeta load_checkpoint(std::span<Parameter* const> params, const fs::path& path) {
  const Manifest manifest = read_manifest(path);
  std::ifstream bin(payload_of(path), std::ios::binary);
  if (!bin) fail(ErrorKind::kIo, "cannot read " + payload_of(path).string());
  const std::string payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  std::map<std::string, std::pair<const ManifestEntry*, std::size_t>> offsets;
  std::size_t offset = 0;
  for (const auto& e : manifest.entries) {
    offsets[e.name] = {&e, offset};
    offset += shape_size(e.shape) * 8;
  }
  require(offset == payload.size(), ErrorKind::kData,
          "checkpoint payload has " + std::to_string(payload.size()) + " bytes, manifest needs " +
              std::to_string(offset));
  for (Parameter* p : params) {
    const auto it = offsets.find(p->name);
    if (it == offsets.end()) fail(ErrorKind::kData, "checkpoint lacks parameter " + p->name);
    const auto& [entry, start] = it->second;
    require(entry->shape == p->value.shape(), ErrorKind::kData,
            "checkpoint shape " + shape_string(entry->shape) + " for " + p->name +
                " does not match model shape " + shape_string(p->value.shape()));
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data()) + start;
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[j * 8 + b]) << (8 * b);
      const double v = std::bit_cast<double>(bits);
      require(std::isfinite(v), ErrorKind::kData, "non-finite value in checkpoint for " + p->name);
      p->value[j] = v;
    }
  }
  return manifest.meta;
}

}  // namespace bcg::ad
