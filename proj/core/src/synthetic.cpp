#include "audiomod/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "audiomod/errors.hpp"
#include "audiomod/layers.hpp"

namespace audiomod::data {

namespace fs = std::filesystem;
using audiofe::Waveform;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNoiseFloor = 0.003;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t sample_count(double duration_s, int rate) {
  if (!(duration_s > 0.0)) throw ConfigError("synthetic duration must be positive");
  return static_cast<std::size_t>(std::llround(duration_s * rate));
}

void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0)
    for (double& v : x) v *= peak / m;
}

void add_floor(std::vector<double>& x, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, kNoiseFloor);
  for (double& v : x) v += n(rng);
}

// Piecewise on/off gate with 10 ms raised-cosine edges.
std::vector<double> burst_envelope(std::size_t n, int rate, std::mt19937_64& rng) {
  std::vector<double> env(n, 0.0);
  const auto ramp = static_cast<std::size_t>(0.010 * rate);
  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.15) * rate);
  while (pos < n) {
    const auto on = static_cast<std::size_t>(uniform(rng, 0.10, 0.60) * rate);
    const auto off = static_cast<std::size_t>(uniform(rng, 0.05, 0.40) * rate);
    const double level = uniform(rng, 0.5, 1.0);
    for (std::size_t i = 0; i < on && pos + i < n; ++i) {
      double g = 1.0;
      if (i < ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
      if (on - i <= ramp) g = std::min(g, 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(on - i) / ramp));
      env[pos + i] = level * g;
    }
    pos += on + off;
  }
  return env;
}

std::string item_id(int label, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn%d_%05d", label, index);
  return buf;
}

std::uint64_t item_seed(std::uint64_t seed, int label, int index) {
  nn::SeedSequence s(seed ^ (static_cast<std::uint64_t>(label) << 40) ^ static_cast<std::uint64_t>(index));
  s.next();
  return s.next();
}

Record make_item(int label, int index, Split split, const SyntheticSpec& spec, const fs::path& out_dir) {
  std::mt19937_64 rng(item_seed(spec.seed, label, index));
  const double duration = uniform(rng, spec.min_duration_s, spec.max_duration_s);
  const Waveform w = label == kLabelNormal
                         ? synthesize_noise_bursts(duration, spec.sample_rate_hz, rng)
                         : synthesize_harmonic_complex(duration, spec.sample_rate_hz, rng);
  Record r;
  r.id = item_id(label, index);
  r.label = label;
  r.split = split;
  r.path = out_dir / (r.id + ".wav");
  r.duration_s = static_cast<double>(w.samples.size()) / spec.sample_rate_hz;
  audiofe::write_wav_pcm16(r.path, w);
  return r;
}

void check_spec(const SyntheticSpec& spec) {
  if (!(spec.min_duration_s > 0.0) || spec.max_duration_s < spec.min_duration_s)
    throw ConfigError("synthetic durations must satisfy 0 < min <= max");
  if (spec.sample_rate_hz < 8000) throw ConfigError("synthetic sample rate must be >= 8000 Hz");
  for (int c : spec.per_class)
    if (c < 0) throw ConfigError("synthetic counts must be non-negative");
}

// Paths in the written manifest are relative to its directory.
void write_local_manifest(const fs::path& out_dir, const Manifest& m) {
  Manifest local = m;
  for (auto& r : local.records) r.path = r.path.filename();
  write_manifest(out_dir / "manifest.jsonl", local);
}

}  // namespace

Waveform synthesize_noise_bursts(double duration_s, int rate, std::mt19937_64& rng) {
  const std::size_t n = sample_count(duration_s, rate);
  // RBJ band-pass biquad, 0 dB peak.
  const double fc = uniform(rng, 1500.0, 5000.0);
  const double q = uniform(rng, 1.0, 3.0);
  const double w0 = kTwoPi * fc / rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;

  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> x(n);
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double in = white(rng);
    const double y = b0 * in + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = in;
    y2 = y1;
    y1 = y;
    x[i] = y;
  }
  const std::vector<double> env = burst_envelope(n, rate, rng);
  for (std::size_t i = 0; i < n; ++i) x[i] *= env[i];
  normalize_peak(x, uniform(rng, 0.3, 0.6));
  add_floor(x, rng);
  return {std::move(x), rate};
}

Waveform synthesize_harmonic_complex(double duration_s, int rate, std::mt19937_64& rng) {
  const std::size_t n = sample_count(duration_s, rate);
  const double f0 = uniform(rng, 150.0, 400.0);
  const int harmonics = std::max(1, static_cast<int>(std::min(4000.0, 0.45 * rate) / f0));
  std::vector<double> phase(harmonics);
  for (double& p : phase) p = uniform(rng, 0.0, kTwoPi);
  const double trem_hz = uniform(rng, 2.0, 6.0);
  const double trem_depth = uniform(rng, 0.1, 0.3);
  const double vib_hz = uniform(rng, 3.0, 6.0);
  const double vib_depth = uniform(rng, 0.002, 0.01);

  std::vector<double> x(n, 0.0);
  double theta = 0.0;  // integrated fundamental phase
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f = f0 * (1.0 + vib_depth * std::sin(kTwoPi * vib_hz * t));
    theta += kTwoPi * f / rate;
    double v = 0.0;
    for (int k = 1; k <= harmonics; ++k) v += std::sin(k * theta + phase[k - 1]) / k;
    x[i] = v * (1.0 - trem_depth + trem_depth * std::sin(kTwoPi * trem_hz * t));
  }
  normalize_peak(x, uniform(rng, 0.3, 0.6));
  add_floor(x, rng);
  return {std::move(x), rate};
}

Manifest make_synthetic_dataset(const SyntheticSpec& spec, const fs::path& out_dir) {
  check_spec(spec);
  fs::create_directories(out_dir);
  Manifest m;
  const Split splits[3] = {Split::kTrain, Split::kVal, Split::kTest};
  int next_index[2] = {0, 0};
  for (int s = 0; s < 3; ++s)
    for (int label : {kLabelNormal, kLabelPornographic})
      for (int i = 0; i < spec.per_class[s]; ++i)
        m.records.push_back(make_item(label, next_index[label]++, splits[s], spec, out_dir));
  write_local_manifest(out_dir, m);
  return m;
}

Manifest make_synthetic_dataset(int n_per_class, const fs::path& out_dir, std::uint64_t seed,
                                double min_duration_s, double max_duration_s) {
  if (n_per_class < 0) throw ConfigError("n_per_class must be non-negative");
  SyntheticSpec spec;
  spec.seed = seed;
  spec.min_duration_s = min_duration_s;
  spec.max_duration_s = max_duration_s;
  check_spec(spec);
  fs::create_directories(out_dir);
  std::vector<Record> records;
  for (int label : {kLabelNormal, kLabelPornographic})
    for (int i = 0; i < n_per_class; ++i) records.push_back(make_item(label, i, Split::kTrain, spec, out_dir));
  Manifest m = split_manifest(std::move(records), kDefaultRatios, seed);
  write_local_manifest(out_dir, m);
  return m;
}

}  // namespace audiomod::data
