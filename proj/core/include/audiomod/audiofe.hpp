#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace audiomod::audiofe {

// Mono PCM audio with samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

struct FbankConfig {
  int sample_rate_hz = 16000;
  double window_ms = 20.0;
  double hop_ms = 10.0;
  int n_mels = 80;
  int fft_size = 512;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;

  int window_samples() const;
  int hop_samples() const;

  // Throws ConfigError when an invariant does not hold.
  void validate() const;
};

// T x n_mels log filterbank energies, row-major (one row per frame).
struct FeatureMatrix {
  int frames = 0;
  int n_mels = 0;
  std::vector<float> values;

  float at(int t, int m) const { return values[static_cast<size_t>(t) * n_mels + m]; }
  std::span<const float> row(int t) const {
    return {values.data() + static_cast<size_t>(t) * n_mels, static_cast<size_t>(n_mels)};
  }
};

// Windowed, zero-padded analysis frames. Each row has fft_size samples.
struct Frames {
  int count = 0;
  int fft_size = 0;
  std::vector<double> values;

  std::span<const double> frame(int t) const {
    return {values.data() + static_cast<size_t>(t) * fft_size, static_cast<size_t>(fft_size)};
  }
};

// Dense n_mels x (fft_size/2 + 1) weight matrix.
struct MelFilterbank {
  int n_mels = 0;
  int n_bins = 0;
  std::vector<double> weights;
  std::vector<double> center_hz;

  double at(int m, int k) const { return weights[static_cast<size_t>(m) * n_bins + k]; }
};

// --- WAV I/O -------------------------------------------------------------

// Reads 8/16/32-bit integer or 32-bit float PCM. Multichannel input is
// averaged to mono. Throws FormatError / UnsupportedError / IoError.
Waveform load_wav(const std::filesystem::path& path);
Waveform decode_wav(std::span<const std::uint8_t> bytes);

// Writes 16-bit PCM mono, clipping to [-1, 1].
void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w);
std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w);

// --- DSP -----------------------------------------------------------------

// Band-limited (windowed-sinc) sample-rate conversion.
Waveform resample(const Waveform& w, int target_hz);

int frame_count(std::size_t num_samples, const FbankConfig& cfg);

std::vector<double> hamming_window(int length);

// Frame t starts at t * hop; Hamming-windowed and zero-padded to fft_size.
// Throws TooShortError when the audio is shorter than one window.
Frames frame_and_window(const Waveform& w, const FbankConfig& cfg);

// |DFT_k|^2 for k in [0, fft_size/2]. fft_size must be a power of two.
std::vector<double> power_spectrum(std::span<const double> frame, int fft_size);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// HTK-mel triangular filters. Throws ConfigError if any row is all zero.
MelFilterbank mel_filterbank_matrix(const FbankConfig& cfg);

// ln(max(filterbank . power, 1e-10)) per frame and filter.
FeatureMatrix log_fbank(const Waveform& w, const FbankConfig& cfg);

inline constexpr double kLogFloor = 1e-10;

// --- Feature file ("AFB1") -----------------------------------------------

void write_features(const std::filesystem::path& path, const FeatureMatrix& f);
FeatureMatrix read_features(const std::filesystem::path& path);

}  // namespace audiomod::audiofe
