#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>

#include "audiomod/audiofe.hpp"
#include "audiomod/manifest.hpp"

namespace audiomod::data {

// Stand-in corpus. Class 0: band-limited noise bursts. Class 1: harmonic
// tone complexes with f0 in [150, 400] Hz. Acoustically separable on
// purpose; neither class imitates real content.
struct SyntheticSpec {
  // Items per class for train, val, test.
  std::array<int, 3> per_class{70, 10, 20};
  double min_duration_s = 2.0;
  double max_duration_s = 10.0;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 0;
};

audiofe::Waveform synthesize_noise_bursts(double duration_s, int sample_rate_hz, std::mt19937_64& rng);
audiofe::Waveform synthesize_harmonic_complex(double duration_s, int sample_rate_hz, std::mt19937_64& rng);

// Writes WAVs plus manifest.jsonl into out_dir with exact per-split counts.
Manifest make_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// n_per_class items of each class; splits assigned by split_manifest.
Manifest make_synthetic_dataset(int n_per_class, const std::filesystem::path& out_dir, std::uint64_t seed,
                                double min_duration_s = 2.0, double max_duration_s = 10.0);

}  // namespace audiomod::data
