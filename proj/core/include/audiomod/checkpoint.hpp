#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "audiomod/tensor.hpp"

namespace audiomod::nn {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// "TCK1" little-endian: u32 count, then per entry u16 name length, UTF-8
// name, u8 ndim, u32 dims, float32 payload.
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& entries);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<NamedArray> snapshot(const ParameterList<T>& tensors);

// Copies entries into same-named tensors. Names and shapes must agree one to
// one; otherwise throws FormatError naming the first mismatch.
template <typename T>
void restore(const std::vector<NamedArray>& entries, ParameterList<T>& tensors);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterList<T>& tensors) {
  write_checkpoint(path, snapshot(tensors));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ParameterList<T>& tensors) {
  restore(read_checkpoint(path), tensors);
}

}  // namespace audiomod::nn
