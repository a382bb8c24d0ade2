#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace audiomod::data {

enum class Split { kTrain, kVal, kTest };

Split parse_split(std::string_view name);
std::string_view to_string(Split s);

inline constexpr int kLabelNormal = 0;
inline constexpr int kLabelPornographic = 1;

struct Record {
  std::string id;
  std::filesystem::path path;
  int label = 0;
  Split split = Split::kTrain;
  double duration_s = 0.0;
};

struct Manifest {
  std::vector<Record> records;

  std::size_t count(Split s) const;
  std::vector<const Record*> of(Split s) const;
  // Unique ids, labels in {0, 1}. Throws DataError.
  void validate() const;
};

// JSON-lines, one record per line with exactly the Record fields. Relative
// paths are resolved against the manifest's directory on read.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

using SplitRatios = std::array<double, 3>;  // train, val, test
inline constexpr SplitRatios kDefaultRatios{0.7, 0.1, 0.2};

// Position of `id` in [0, 1) under a seeded 64-bit hash.
double split_hash_unit(std::string_view id, std::uint64_t seed);

// Pure function of (id, ratios, seed).
Split assign_split(std::string_view id, const SplitRatios& ratios, std::uint64_t seed);

// Assigns every record by seeded hash of its id, so the assignment is stable
// under reordering and insertion. Throws DataError on duplicate ids and
// ConfigError when the ratios do not sum to 1.
Manifest split_manifest(std::vector<Record> records, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace audiomod::data
