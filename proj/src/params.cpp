#include "biomm/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "biomm/error.hpp"
#include "biomm/rng.hpp"

namespace biomm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::size_t fan_in(const Shape& shape) {
  std::size_t f = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) f *= shape[i];
  return f;
}

Tensor uniform_init(const std::string& name, const Shape& shape, std::uint64_t seed) {
  std::uint64_t stream = hash_string(name);
  for (std::size_t d : shape) stream = mix64(stream ^ d);
  Rng rng(mix64(seed) ^ stream);
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in(shape)));
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Parameter& ParamStore::add(const std::string& name, const Shape& shape, InitKind init) {
  if (auto it = entries_.find(name); it != entries_.end()) {
    if (it->second.value.shape() != shape)
      throw DimensionError("parameter '" + name + "' already registered with shape " +
                           shape_string(it->second.value.shape()) + ", requested " + shape_string(shape));
    return it->second;
  }
  Parameter p;
  p.value = init == InitKind::Uniform ? uniform_init(name, shape, seed_) : Tensor(shape, 0.0);
  p.grad.assign(p.value.size(), 0.0);
  return entries_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : entries_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : entries_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  grads_populated_ = false;
}

void ParamStore::scale_grad(double factor) {
  for (auto& [_, p] : entries_)
    for (double& g : p.grad) g *= factor;
}

void ParamStore::copy_values_from(const ParamStore& other, const std::string& prefix) {
  for (const auto& [name, src] : other) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto it = entries_.find(name);
    if (it == entries_.end()) continue;
    if (it->second.value.shape() != src.value.shape())
      throw DimensionError("parameter '" + name + "' shape mismatch: " + shape_string(it->second.value.shape()) +
                           " vs " + shape_string(src.value.shape()));
    it->second.value = src.value;
  }
}

namespace {

constexpr char kMagic[8] = {'B', 'I', 'O', 'M', 'M', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& where) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IngestError(where + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, store.seed());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(os, d);
  }
  for (const auto& [_, p] : store)
    os.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  if (!os) throw Error("write failed for " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open checkpoint " + where);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IngestError(where + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(is, where);
  if (version != kCheckpointVersion)
    throw IngestError(where + ": unsupported checkpoint version " + std::to_string(version));
  ParamStore store(get<std::uint64_t>(is, where));
  const auto count = get<std::uint32_t>(is, where);
  std::vector<std::pair<std::string, Shape>> header;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is, where);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IngestError(where + ": truncated checkpoint");
    const auto rank = get<std::uint32_t>(is, where);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is, where);
    header.emplace_back(std::move(name), std::move(shape));
  }
  for (const auto& [name, shape] : header) {
    Parameter& p = store.add(name, shape, InitKind::Zero);
    if (!is.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double))))
      throw IngestError(where + ": truncated checkpoint");
  }
  return store;
}

}  // namespace biomm
