#include "audiomod/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "audiomod/errors.hpp"

namespace audiomod::nn {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  char b[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw FormatError("truncated checkpoint");
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>(v | (static_cast<U>(b[i]) << (8 * i)));
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("TCK1", 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw ContractError("parameter name too long: " + e.name);
    if (e.shape.size() > 0xFF) throw ContractError("too many dims for " + e.name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.shape.size()));
    for (int d : e.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : e.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "TCK1", 4) != 0) {
    throw FormatError(path.string() + ": bad checkpoint magic");
  }
  const auto count = get_le<std::uint32_t>(in);
  std::vector<NamedArray> entries;
  entries.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray e;
    e.name.resize(get_le<std::uint16_t>(in));
    if (!in.read(e.name.data(), static_cast<std::streamsize>(e.name.size()))) {
      throw FormatError("truncated checkpoint name");
    }
    const auto nd = get_le<std::uint8_t>(in);
    e.shape.resize(nd);
    for (auto& d : e.shape) d = static_cast<int>(get_le<std::uint32_t>(in));
    e.values.resize(shape_numel(e.shape));
    for (auto& v : e.values) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
    entries.push_back(std::move(e));
  }
  return entries;
}

template <typename T>
std::vector<NamedArray> snapshot(const ParameterList<T>& tensors) {
  std::vector<NamedArray> out;
  out.reserve(tensors.size());
  for (const auto& p : tensors) {
    NamedArray e{p.name, p.tensor.shape(), {}};
    e.values.reserve(p.tensor.numel());
    for (T v : p.tensor.data()) e.values.push_back(static_cast<float>(v));
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
void restore(const std::vector<NamedArray>& entries, ParameterList<T>& tensors) {
  if (entries.size() != tensors.size()) {
    throw FormatError("checkpoint has " + std::to_string(entries.size()) + " tensors, model expects " +
                      std::to_string(tensors.size()));
  }
  std::unordered_map<std::string, const NamedArray*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (auto& p : tensors) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing " + p.name);
    const NamedArray& e = *it->second;
    if (e.shape != p.tensor.shape()) {
      throw FormatError("shape mismatch for " + p.name + ": checkpoint " + shape_str(e.shape) +
                        " vs model " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
  }
}

template std::vector<NamedArray> snapshot(const ParameterList<float>&);
template std::vector<NamedArray> snapshot(const ParameterList<double>&);
template void restore(const std::vector<NamedArray>&, ParameterList<float>&);
template void restore(const std::vector<NamedArray>&, ParameterList<double>&);

}  // namespace audiomod::nn
