#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "audiomod/audiofe.hpp"
#include "audiomod/manifest.hpp"
#include "audiomod/tensor.hpp"

namespace audiomod::data {

struct ItemError {
  std::string id;
  std::string message;
};

// Thread-safe cache of extracted features keyed by record id.
class FeatureStore {
 public:
  explicit FeatureStore(audiofe::FbankConfig cfg = {});

  const audiofe::FbankConfig& config() const { return cfg_; }

  // Loads, resamples to the feature rate, and extracts on first use.
  // Throws the underlying audiofe error for unreadable items.
  std::shared_ptr<const audiofe::FeatureMatrix> get(const Record& r);

  // Extracts every record, in parallel. Failures are collected, not thrown.
  std::vector<ItemError> preload(const Manifest& m, int threads);

  void put(const std::string& id, audiofe::FeatureMatrix f);

 private:
  audiofe::FbankConfig cfg_;
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const audiofe::FeatureMatrix>> cache_;
};

struct Batch {
  nn::Tensor<float> features;  // N x 1 x T_max x n_mels, zero padded
  std::vector<int> valid_frames;
  std::vector<int> labels;
  std::vector<std::string> ids;

  int size() const { return static_cast<int>(labels.size()); }
};

template <typename T>
nn::Tensor<T> cast_features(const nn::Tensor<float>& f);

// Deterministic batch plan: per-epoch shuffle keyed by (seed, epoch), stable
// grouping into 1-second duration buckets, contiguous chunks. Full batches
// are then shuffled; a final short batch stays last. Without shuffling the
// records are only bucketed.
std::vector<std::vector<const Record*>> plan_batches(std::vector<const Record*> items, int batch_size,
                                                     std::uint64_t seed, int epoch, bool shuffle);

Batch assemble_batch(const std::vector<const Record*>& items, FeatureStore& store,
                     std::vector<ItemError>* errors);

class BatchIterator {
 public:
  BatchIterator(const Manifest& m, Split split, int batch_size, std::uint64_t seed, int epoch,
                FeatureStore& store, bool shuffle = true);

  std::size_t num_batches() const { return plan_.size(); }
  // Next non-empty batch; nullopt once exhausted.
  std::optional<Batch> next();
  const std::vector<ItemError>& errors() const { return errors_; }

 private:
  FeatureStore& store_;
  std::vector<std::vector<const Record*>> plan_;
  std::size_t cursor_ = 0;
  std::vector<ItemError> errors_;
};

}  // namespace audiomod::data
