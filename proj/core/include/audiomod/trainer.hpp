#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "audiomod/batching.hpp"
#include "audiomod/manifest.hpp"
#include "audiomod/model.hpp"
#include "audiomod/schedule.hpp"

namespace audiomod::training {

struct KdSettings {
  double temperature = 10.0;
  double lambda = 0.5;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  LrSchedule schedule;
  double label_smoothing_eps = 0.0;
  std::optional<KdSettings> kd;
  std::uint64_t seed = 0;
  // Evaluation workers; training itself is single-writer.
  int threads = 1;

  void validate() const;
};

struct MetricsRecord {
  int epoch = 0;
  data::Split split = data::Split::kTrain;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
  int count = 0;  // items scored; not serialized
};

std::string to_json_line(const MetricsRecord& r);

struct TrainSummary {
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::vector<MetricsRecord> history;
  std::vector<data::ItemError> item_errors;
};

std::string to_json_line(const TrainSummary& s);

struct RunOutput {
  // Empty: no files are written.
  std::filesystem::path dir;
  bool save_epoch_checkpoints = true;
  // Sidecar text written next to every checkpoint as <ckpt>.meta.
  std::string meta;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

// Eval-mode pass over a split, parallel across batches. Loss is mean
// cross-entropy. Throws DataError on an empty split.
template <typename T>
MetricsRecord evaluate(model::Model<T>& m, const data::Manifest& manifest, data::Split split,
                       data::FeatureStore& store, int batch_size, int threads,
                       std::vector<data::ItemError>* errors = nullptr);

// Trains `student`, validating every epoch and keeping the state with the
// best validation accuracy (ties go to lower validation loss). On return the
// student holds that state and the test split has been scored with it.
// `teacher` is required iff cfg.kd is set; it is run once over the training
// split in eval mode without recording, and its logits are reused every epoch. A non-finite loss writes an abort record and throws
// NumericError.
template <typename T>
TrainSummary train(model::Model<T>& student, model::Model<T>* teacher, const data::Manifest& manifest,
                   data::FeatureStore& store, const TrainConfig& cfg, const RunOutput& out = {},
                   const MetricsSink& sink = {});

}  // namespace audiomod::training
