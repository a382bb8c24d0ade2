#include "audiomod/batching.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "audiomod/errors.hpp"
#include "audiomod/parallel.hpp"

namespace audiomod::data {

FeatureStore::FeatureStore(audiofe::FbankConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::shared_ptr<const audiofe::FeatureMatrix> FeatureStore::get(const Record& r) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(r.id); it != cache_.end()) return it->second;
  }
  audiofe::Waveform w = audiofe::load_wav(r.path);
  if (w.sample_rate_hz != cfg_.sample_rate_hz) w = audiofe::resample(w, cfg_.sample_rate_hz);
  auto f = std::make_shared<const audiofe::FeatureMatrix>(audiofe::log_fbank(w, cfg_));
  std::lock_guard lock(mu_);
  return cache_.emplace(r.id, std::move(f)).first->second;
}

void FeatureStore::put(const std::string& id, audiofe::FeatureMatrix f) {
  if (f.n_mels != cfg_.n_mels) throw ShapeError("feature width does not match the store's n_mels");
  std::lock_guard lock(mu_);
  cache_[id] = std::make_shared<const audiofe::FeatureMatrix>(std::move(f));
}

std::vector<ItemError> FeatureStore::preload(const Manifest& m, int threads) {
  std::vector<std::string> failures(m.records.size());
  parallel_for(m.records.size(), threads, [&](std::size_t i) {
    try {
      get(m.records[i]);
    } catch (const Error& e) {
      failures[i] = std::string(to_string(e.kind())) + ": " + e.what();
    }
  });
  std::vector<ItemError> out;
  for (std::size_t i = 0; i < failures.size(); ++i)
    if (!failures[i].empty()) out.push_back({m.records[i].id, failures[i]});
  return out;
}

template <typename T>
nn::Tensor<T> cast_features(const nn::Tensor<float>& f) {
  if constexpr (std::is_same_v<T, float>) {
    return f;
  } else {
    std::vector<T> v(f.data().begin(), f.data().end());
    return nn::Tensor<T>(f.shape(), std::move(v));
  }
}

template nn::Tensor<float> cast_features<float>(const nn::Tensor<float>&);
template nn::Tensor<double> cast_features<double>(const nn::Tensor<float>&);

std::vector<std::vector<const Record*>> plan_batches(std::vector<const Record*> items, int batch_size,
                                                     std::uint64_t seed, int epoch, bool shuffle) {
  if (batch_size < 1) throw ConfigKeyError("train.batch_size", "must be >= 1");
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
  if (shuffle) std::shuffle(items.begin(), items.end(), rng);
  std::stable_sort(items.begin(), items.end(), [](const Record* a, const Record* b) {
    return std::floor(a->duration_s) < std::floor(b->duration_s);
  });
  std::vector<std::vector<const Record*>> batches;
  for (std::size_t i = 0; i < items.size(); i += batch_size) {
    const std::size_t end = std::min(items.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(items.begin() + i, items.begin() + end);
  }
  if (shuffle) {
    const bool short_tail = !batches.empty() && batches.back().size() < static_cast<std::size_t>(batch_size);
    std::shuffle(batches.begin(), batches.end() - (short_tail ? 1 : 0), rng);
  }
  return batches;
}

Batch assemble_batch(const std::vector<const Record*>& items, FeatureStore& store,
                     std::vector<ItemError>* errors) {
  std::vector<std::shared_ptr<const audiofe::FeatureMatrix>> feats;
  Batch b;
  for (const Record* r : items) {
    try {
      feats.push_back(store.get(*r));
    } catch (const Error& e) {
      if (errors == nullptr) throw;
      errors->push_back({r->id, std::string(to_string(e.kind())) + ": " + e.what()});
      continue;
    }
    b.valid_frames.push_back(feats.back()->frames);
    b.labels.push_back(r->label);
    b.ids.push_back(r->id);
  }
  if (feats.empty()) return b;
  const int n_mels = store.config().n_mels;
  const int t_max = *std::max_element(b.valid_frames.begin(), b.valid_frames.end());
  const int n = static_cast<int>(feats.size());
  std::vector<float> v(static_cast<std::size_t>(n) * t_max * n_mels, 0.0f);
  for (int i = 0; i < n; ++i)
    std::copy(feats[i]->values.begin(), feats[i]->values.end(),
              v.begin() + static_cast<std::ptrdiff_t>(i) * t_max * n_mels);
  b.features = nn::Tensor<float>({n, 1, t_max, n_mels}, std::move(v));
  return b;
}

BatchIterator::BatchIterator(const Manifest& m, Split split, int batch_size, std::uint64_t seed, int epoch,
                             FeatureStore& store, bool shuffle)
    : store_(store), plan_(plan_batches(m.of(split), batch_size, seed, epoch, shuffle)) {}

std::optional<Batch> BatchIterator::next() {
  while (cursor_ < plan_.size()) {
    Batch b = assemble_batch(plan_[cursor_++], store_, &errors_);
    if (b.size() > 0) return b;
  }
  return std::nullopt;
}

}  // namespace audiomod::data
