#include "audiomod/manifest.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "audiomod/errors.hpp"

namespace audiomod::data {

namespace fs = std::filesystem;
using nlohmann::json;

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "' (allowed: train|val|test)");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    default: return "train";
  }
}

std::size_t Manifest::count(Split s) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.split == s ? 1 : 0;
  return n;
}

std::vector<const Record*> Manifest::of(Split s) const {
  std::vector<const Record*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

void Manifest::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (r.id.empty()) throw DataError("manifest record with empty id");
    if (!seen.insert(r.id).second) throw DataError("duplicate id '" + r.id + "'");
    if (r.label != kLabelNormal && r.label != kLabelPornographic)
      throw DataError("record '" + r.id + "': label must be 0 or 1");
    if (!(r.duration_s >= 0.0) || !std::isfinite(r.duration_s))
      throw DataError("record '" + r.id + "': bad duration_s");
  }
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": expected an object");
    for (const char* key : {"id", "path", "label", "split", "duration_s"})
      if (!j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
    if (j.size() != 5) throw DataError(where + ": unexpected extra fields");
    Record r;
    try {
      r.id = j.at("id").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.label = j.at("label").get<int>();
      r.duration_s = j.at("duration_s").get<double>();
      r.split = parse_split(j.at("split").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (r.path.is_relative()) r.path = base / r.path;
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : m.records) {
    json j;
    j["id"] = r.id;
    j["path"] = r.path.generic_string();
    j["label"] = r.label;
    j["split"] = std::string(to_string(r.split));
    j["duration_s"] = r.duration_s;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("short write on " + path.string());
}

double split_hash_unit(std::string_view id, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = h ^ (seed + 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

Split assign_split(std::string_view id, const SplitRatios& ratios, std::uint64_t seed) {
  const double u = split_hash_unit(id, seed);
  if (u < ratios[0]) return Split::kTrain;
  if (u < ratios[0] + ratios[1]) return Split::kVal;
  return Split::kTest;
}

Manifest split_manifest(std::vector<Record> records, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  Manifest m{std::move(records)};
  for (auto& r : m.records) r.split = assign_split(r.id, ratios, seed);
  m.validate();
  return m;
}

}  // namespace audiomod::data
