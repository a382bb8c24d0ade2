#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "audiomod/batching.hpp"
#include "audiomod/errors.hpp"
#include "audiomod/manifest.hpp"
#include "audiomod/synthetic.hpp"
#include "test_support.hpp"

namespace audiomod {
namespace {

using data::Record;
using data::Split;
namespace fs = std::filesystem;

std::vector<Record> numbered(int n, const std::string& prefix = "item") {
  std::vector<Record> out;
  for (int i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), "x.wav", i % 2, Split::kTrain, 1.0});
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --- Splits -----------------------------------------------------------------

TEST(Split, ParseNames) {
  EXPECT_EQ(data::parse_split("train"), Split::kTrain);
  EXPECT_EQ(data::parse_split("val"), Split::kVal);
  EXPECT_EQ(data::parse_split("test"), Split::kTest);
  EXPECT_THROW(data::parse_split("dev"), ConfigError);
}

TEST(Split, ProportionsWithinTwoPercent) {
  const auto m = data::split_manifest(numbered(1000), data::kDefaultRatios, 7);
  EXPECT_NEAR(m.count(Split::kTrain) / 1000.0, 0.7, 0.02);
  EXPECT_NEAR(m.count(Split::kVal) / 1000.0, 0.1, 0.02);
  EXPECT_NEAR(m.count(Split::kTest) / 1000.0, 0.2, 0.02);
  EXPECT_EQ(m.records.size(), 1000u);
}

TEST(Split, HashUnitLooksUniform) {
  std::array<int, 10> bins{};
  for (int i = 0; i < 20000; ++i) {
    const double u = data::split_hash_unit("id" + std::to_string(i), 3);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ++bins[static_cast<int>(u * 10)];
  }
  for (int b : bins) EXPECT_NEAR(b, 2000, 200);
}

TEST(Split, StableUnderReorderingAndInsertion) {
  auto recs = numbered(300);
  const auto a = data::split_manifest(recs, data::kDefaultRatios, 7);
  std::mt19937_64 rng(1);
  std::shuffle(recs.begin(), recs.end(), rng);
  for (auto& extra : numbered(50, "new")) recs.push_back(extra);
  const auto b = data::split_manifest(recs, data::kDefaultRatios, 7);
  std::map<std::string, Split> where;
  for (const auto& r : b.records) where[r.id] = r.split;
  for (const auto& r : a.records) EXPECT_EQ(where.at(r.id), r.split) << r.id;
}

TEST(Split, SeedChangesAssignment) {
  const auto a = data::split_manifest(numbered(200), data::kDefaultRatios, 1);
  const auto b = data::split_manifest(numbered(200), data::kDefaultRatios, 2);
  int differ = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i) differ += a.records[i].split != b.records[i].split;
  EXPECT_GT(differ, 20);
}

TEST(Split, DegenerateRatios) {
  const auto all_train = data::split_manifest(numbered(100), {1.0, 0.0, 0.0}, 7);
  EXPECT_EQ(all_train.count(Split::kTrain), 100u);
  const auto all_test = data::split_manifest(numbered(100), {0.0, 0.0, 1.0}, 7);
  EXPECT_EQ(all_test.count(Split::kTest), 100u);
  EXPECT_THROW(data::split_manifest(numbered(10), {0.5, 0.2, 0.2}, 7), ConfigError);
  EXPECT_THROW(data::split_manifest(numbered(10), {1.2, -0.1, -0.1}, 7), ConfigError);
}

TEST(Split, DuplicateIdsRejected) {
  auto recs = numbered(5);
  recs.push_back(recs[2]);
  EXPECT_THROW(data::split_manifest(recs, data::kDefaultRatios, 7), DataError);
}

// --- Manifest I/O -----------------------------------------------------------------

TEST(Manifest, RoundTripAndRelativePaths) {
  const auto dir = testing::scratch_dir("manifest_rt");
  data::Manifest m;
  m.records = {{"a", dir / "a.wav", 0, Split::kTrain, 2.5}, {"b", dir / "sub" / "b.wav", 1, Split::kTest, 7.0}};
  data::write_manifest(dir / "m.jsonl", m);
  const auto back = data::read_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[1].id, "b");
  EXPECT_EQ(back.records[1].path, dir / "sub" / "b.wav");
  EXPECT_EQ(back.records[1].label, 1);
  EXPECT_EQ(back.records[1].split, Split::kTest);
  EXPECT_EQ(back.records[1].duration_s, 7.0);

  std::ofstream(dir / "rel.jsonl")
      << R"({"id":"c","path":"clips/c.wav","label":0,"split":"val","duration_s":3.0})" << "\n";
  EXPECT_EQ(data::read_manifest(dir / "rel.jsonl").records[0].path, dir / "clips" / "c.wav");
}

TEST(Manifest, ReadErrors) {
  const auto dir = testing::scratch_dir("manifest_err");
  EXPECT_THROW(data::read_manifest(dir / "missing.jsonl"), IoError);
  auto expect_data_error = [&](const std::string& line) {
    std::ofstream(dir / "bad.jsonl") << line << "\n";
    EXPECT_THROW(data::read_manifest(dir / "bad.jsonl"), DataError) << line;
  };
  expect_data_error("{not json");
  expect_data_error(R"({"id":"a","path":"a.wav","label":0,"split":"train"})");
  expect_data_error(R"({"id":"a","path":"a.wav","label":0,"split":"train","duration_s":1,"extra":1})");
  expect_data_error(R"({"id":"a","path":"a.wav","label":"0","split":"train","duration_s":1})");
  expect_data_error(R"({"id":"a","path":"a.wav","label":0,"split":"holdout","duration_s":1})");
  expect_data_error(R"({"id":"a","path":"a.wav","label":3,"split":"train","duration_s":1})");
  expect_data_error(std::string(R"({"id":"a","path":"a.wav","label":0,"split":"train","duration_s":1})") + "\n" +
                    R"({"id":"a","path":"b.wav","label":1,"split":"test","duration_s":1})");
}

// --- Synthetic corpus --------------------------------------------------------------

data::SyntheticSpec small_spec(std::uint64_t seed) {
  data::SyntheticSpec s;
  s.per_class = {12, 2, 12};
  s.min_duration_s = 1.0;
  s.max_duration_s = 2.0;
  s.seed = seed;
  return s;
}

TEST(Synthetic, ExactCountsAndManifest) {
  const auto dir = testing::scratch_dir("synthetic_counts");
  const auto m = data::make_synthetic_dataset(small_spec(1), dir);
  EXPECT_EQ(m.count(Split::kTrain), 24u);
  EXPECT_EQ(m.count(Split::kVal), 4u);
  EXPECT_EQ(m.count(Split::kTest), 24u);
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    int ones = 0;
    for (const auto* r : m.of(s)) ones += r->label;
    EXPECT_EQ(ones * 2, static_cast<int>(m.count(s)));
  }
  const auto back = data::read_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(back.records.size(), m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(back.records[i].path, m.records[i].path);
    const auto w = audiofe::load_wav(m.records[i].path);
    EXPECT_EQ(w.sample_rate_hz, 16000);
    EXPECT_NEAR(w.duration_s(), m.records[i].duration_s, 1e-3);
    EXPECT_GE(w.duration_s(), 1.0 - 1e-3);
    EXPECT_LE(w.duration_s(), 2.0 + 1e-3);
  }
}

TEST(Synthetic, RegenerationIsByteIdentical) {
  const auto a = testing::scratch_dir("synthetic_a");
  const auto b = testing::scratch_dir("synthetic_b");
  const auto ma = data::make_synthetic_dataset(small_spec(5), a);
  data::make_synthetic_dataset(small_spec(5), b);
  EXPECT_EQ(read_file(a / "manifest.jsonl"), read_file(b / "manifest.jsonl"));
  for (const auto& r : ma.records) EXPECT_EQ(read_file(r.path), read_file(b / r.path.filename())) << r.id;
  const auto c = testing::scratch_dir("synthetic_c");
  const auto mc = data::make_synthetic_dataset(small_spec(6), c);
  EXPECT_NE(read_file(ma.records[0].path), read_file(mc.records[0].path));
}

TEST(Synthetic, PerClassOverloadUsesHashedSplits) {
  const auto dir = testing::scratch_dir("synthetic_hashed");
  const auto m = data::make_synthetic_dataset(10, dir, 3, 0.5, 0.6);
  EXPECT_EQ(m.records.size(), 20u);
  for (const auto& r : m.records) EXPECT_EQ(r.split, data::assign_split(r.id, data::kDefaultRatios, 3));
}

TEST(Synthetic, WaveformsBoundedAndNonSilent) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    for (const auto& w : {data::synthesize_noise_bursts(1.5, 16000, rng),
                          data::synthesize_harmonic_complex(1.5, 16000, rng)}) {
      EXPECT_EQ(w.samples.size(), 24000u);
      double peak = 0, energy = 0;
      for (double s : w.samples) {
        peak = std::max(peak, std::abs(s));
        energy += s * s;
      }
      EXPECT_LE(peak, 1.0);
      EXPECT_GT(energy / w.samples.size(), 1e-5);
    }
  }
}

// Mean spectral centroid (in mel bins) of the linear-power filterbank output.
double mel_centroid(const audiofe::FeatureMatrix& f) {
  double num = 0, den = 0;
  for (int t = 0; t < f.frames; ++t)
    for (int m = 0; m < f.n_mels; ++m) {
      const double p = std::exp(static_cast<double>(f.at(t, m)));
      num += m * p;
      den += p;
    }
  return num / den;
}

TEST(Synthetic, ClassesSeparableBySpectralCentroid) {
  const auto dir = testing::scratch_dir("synthetic_centroid");
  const auto m = data::make_synthetic_dataset(small_spec(11), dir);
  data::FeatureStore store;
  double mean[2] = {0, 0};
  int n[2] = {0, 0};
  for (const auto* r : m.of(Split::kTrain)) {
    mean[r->label] += mel_centroid(*store.get(*r));
    ++n[r->label];
  }
  const double threshold = 0.5 * (mean[0] / n[0] + mean[1] / n[1]);
  const bool class0_high = mean[0] / n[0] > mean[1] / n[1];
  int correct = 0;
  for (const auto* r : m.of(Split::kTest)) {
    const bool high = mel_centroid(*store.get(*r)) > threshold;
    correct += (high == class0_high) == (r->label == 0);
  }
  EXPECT_GT(correct / static_cast<double>(m.count(Split::kTest)), 0.9);
}

// --- Batching ------------------------------------------------------------------

struct StoreFixture {
  data::Manifest manifest;
  data::FeatureStore store{[] {
    audiofe::FbankConfig c;
    c.n_mels = 4;
    return c;
  }()};
};

std::unique_ptr<StoreFixture> frames_fixture(const std::vector<int>& frames) {
  auto f = std::make_unique<StoreFixture>();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string id = "r" + std::to_string(i);
    f->manifest.records.push_back({id, "/nonexistent.wav", static_cast<int>(i % 2), Split::kTrain,
                                   frames[i] / 100.0});
    audiofe::FeatureMatrix m{frames[i], 4, std::vector<float>(static_cast<std::size_t>(frames[i]) * 4,
                                                              static_cast<float>(i + 1))};
    f->store.put(id, std::move(m));
  }
  return f;
}

TEST(Batching, SizesWithShortTailLast) {
  const auto f = frames_fixture(std::vector<int>(10, 150));
  for (int epoch = 0; epoch < 5; ++epoch) {
    data::BatchIterator it(f->manifest, Split::kTrain, 4, 1, epoch, f->store);
    std::vector<int> sizes;
    while (auto b = it.next()) sizes.push_back(b->size());
    EXPECT_EQ(sizes, (std::vector<int>{4, 4, 2}));
  }
}

TEST(Batching, EveryItemOncePerEpoch) {
  std::vector<int> frames;
  for (int i = 0; i < 37; ++i) frames.push_back(100 + 37 * i % 700);
  const auto f = frames_fixture(frames);
  for (int epoch = 0; epoch < 3; ++epoch) {
    data::BatchIterator it(f->manifest, Split::kTrain, 5, 9, epoch, f->store);
    std::multiset<std::string> seen;
    while (auto b = it.next())
      for (const auto& id : b->ids) seen.insert(id);
    EXPECT_EQ(seen.size(), 37u);
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), 37u);
  }
}

TEST(Batching, DeterministicPerSeedAndEpoch) {
  std::vector<int> frames;
  for (int i = 0; i < 30; ++i) frames.push_back(100 + 53 * i % 400);
  const auto f = frames_fixture(frames);
  auto order = [&](std::uint64_t seed, int epoch) {
    std::vector<std::string> ids;
    for (const auto& batch : data::plan_batches(f->manifest.of(Split::kTrain), 4, seed, epoch, true))
      for (const auto* r : batch) ids.push_back(r->id);
    return ids;
  };
  EXPECT_EQ(order(1, 0), order(1, 0));
  EXPECT_NE(order(1, 0), order(1, 1));
  EXPECT_NE(order(1, 0), order(2, 0));
  // Unshuffled plans ignore seed and epoch.
  EXPECT_EQ(data::plan_batches(f->manifest.of(Split::kTrain), 4, 1, 0, false),
            data::plan_batches(f->manifest.of(Split::kTrain), 4, 2, 3, false));
}

TEST(Batching, BatchesStayWithinDurationBuckets) {
  std::vector<int> frames;
  for (int i = 0; i < 40; ++i) frames.push_back(i < 20 ? 120 + i : 520 + i);
  const auto f = frames_fixture(frames);
  for (const auto& batch : data::plan_batches(f->manifest.of(Split::kTrain), 4, 3, 0, true)) {
    std::set<int> buckets;
    for (const auto* r : batch) buckets.insert(static_cast<int>(r->duration_s));
    EXPECT_EQ(buckets.size(), 1u);
  }
}

TEST(Batching, PaddingAndValidFrames) {
  const auto f = frames_fixture({3, 5});
  const auto b = data::assemble_batch(f->manifest.of(Split::kTrain), f->store, nullptr);
  EXPECT_EQ(b.features.shape(), (nn::Shape{2, 1, 5, 4}));
  EXPECT_EQ(b.valid_frames, (std::vector<int>{3, 5}));
  EXPECT_EQ(b.labels, (std::vector<int>{0, 1}));
  const auto v = b.features.data();
  for (int t = 0; t < 5; ++t)
    for (int m = 0; m < 4; ++m) {
      EXPECT_EQ(v[t * 4 + m], t < 3 ? 1.0f : 0.0f);
      EXPECT_EQ(v[20 + t * 4 + m], 2.0f);
    }
}

TEST(Batching, EqualLengthsNeedNoPadding) {
  const auto f = frames_fixture({7, 7, 7});
  const auto b = data::assemble_batch(f->manifest.of(Split::kTrain), f->store, nullptr);
  EXPECT_EQ(b.features.dim(2), 7);
  for (float x : b.features.data()) EXPECT_NE(x, 0.0f);
}

TEST(Batching, UnreadableItemIsReportedAndSkipped) {
  const auto dir = testing::scratch_dir("batch_unreadable");
  auto f = frames_fixture({200, 200, 200});
  std::ofstream(dir / "junk.wav") << "this is not a wav file";
  f->manifest.records.push_back({"junk", dir / "junk.wav", 1, Split::kTrain, 2.0});
  f->manifest.records.push_back({"gone", dir / "gone.wav", 0, Split::kTrain, 2.0});
  data::BatchIterator it(f->manifest, Split::kTrain, 8, 1, 0, f->store);
  int items = 0;
  while (auto b = it.next()) items += b->size();
  EXPECT_EQ(items, 3);
  ASSERT_EQ(it.errors().size(), 2u);
  std::set<std::string> ids{it.errors()[0].id, it.errors()[1].id};
  EXPECT_EQ(ids, (std::set<std::string>{"junk", "gone"}));
  for (const auto& e : it.errors()) EXPECT_FALSE(e.message.empty());
  EXPECT_THROW(data::assemble_batch({&f->manifest.records[3]}, f->store, nullptr), FormatError);
}

TEST(Batching, PreloadExtractsFromDisk) {
  const auto dir = testing::scratch_dir("batch_preload");
  const auto m = data::make_synthetic_dataset(small_spec(2), dir);
  data::FeatureStore store;
  EXPECT_TRUE(store.preload(m, 2).empty());
  const auto f = store.get(m.records[0]);
  EXPECT_EQ(f->n_mels, 80);
  EXPECT_EQ(f->frames, audiofe::frame_count(audiofe::load_wav(m.records[0].path).samples.size(), store.config()));
}

TEST(Batching, CastToDouble) {
  const auto t = nn::Tensor<float>({2}, {1.5f, -2.0f});
  EXPECT_EQ(testing::to_vec(data::cast_features<double>(t)), (std::vector<double>{1.5, -2.0}));
}

}  // namespace
}  // namespace audiomod
