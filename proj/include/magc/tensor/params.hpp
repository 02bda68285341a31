#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "magc/tensor/tensor.hpp"

namespace magc {

// A named view of a module's tensor. Buffers such as batch-norm running
// statistics are listed with trainable == false so they are checkpointed
// but never handed to the optimizer.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

template <typename T>
std::size_t count_trainable(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params)
    if (p.trainable) n += p.tensor.numel();
  return n;
}

template <typename T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

// Weight checkpoint ("MGWT"): magic, version u8, count u32, then per entry
// name length u16 + UTF-8 name, rank u8, u32 dims, float32 values, all
// little-endian.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(std::span<const CheckpointEntry> entries);
std::vector<CheckpointEntry> parse_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
std::vector<CheckpointEntry> to_entries(const ParamList<T>& params);

// Copies matching entries into |params| by name. Every parameter must be
// present with an identical shape; extra entries are ignored.
template <typename T>
void load_entries(ParamList<T>& params, std::span<const CheckpointEntry> entries);

template <typename T>
std::vector<std::uint8_t> serialize_params(const ParamList<T>& params) {
  const auto entries = to_entries(params);
  return serialize_checkpoint(entries);
}

template <typename T>
void save_params(const std::filesystem::path& path, const ParamList<T>& params);

template <typename T>
void load_params(const std::filesystem::path& path, ParamList<T>& params);

}  // namespace magc
