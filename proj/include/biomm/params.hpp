#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "biomm/tensor.hpp"

namespace biomm {

struct Parameter {
  Tensor value;
  std::vector<double> grad;  // same length as value, always allocated
};

enum class InitKind { Uniform, Zero };

/// Draws i.i.d. values on [-b, b] with b = sqrt(1 / fan_in), where fan_in is
/// the product of all dimensions after the first (1 for rank-1 shapes).
/// The stream depends only on (name, shape, seed).
Tensor uniform_init(const std::string& name, const Shape& shape, std::uint64_t seed);
inline Tensor uniform_init(const Shape& shape, std::uint64_t seed) { return uniform_init("", shape, seed); }

std::size_t fan_in(const Shape& shape);

/// Named registry of trainable tensors. Iteration order is lexicographic by
/// name, which fixes the checkpoint layout and the optimizer's visiting order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// Registers `name`, or returns the existing entry when the shape agrees.
  Parameter& add(const std::string& name, const Shape& shape, InitKind init = InitKind::Uniform);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  void zero_grad();
  void scale_grad(double factor);
  bool grads_populated() const noexcept { return grads_populated_; }
  void set_grads_populated(bool populated) noexcept { grads_populated_ = populated; }

  /// Copies values of every entry present in both stores (shapes must agree).
  void copy_values_from(const ParamStore& other, const std::string& prefix = "");

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::uint64_t seed_;
  std::map<std::string, Parameter> entries_;
  bool grads_populated_ = false;
};

/// Binary checkpoint, little-endian:
///   magic "BIOMMCKP" | u32 version | u64 seed | u32 count
///   count x { u32 name_len | name | u32 rank | u64 dims[rank] }
///   count x { f64 values[prod(dims)] }   (row-major, header order)
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace biomm
