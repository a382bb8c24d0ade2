#include "audiomod/audiofe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "audiomod/errors.hpp"

namespace audiomod::audiofe {
namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // Twiddles exp(-2 pi i k / n), k < n/2; explicit real arithmetic avoids the
  // slow NaN-checking complex multiply.
  thread_local std::vector<double> tw_re, tw_im;
  if (tw_re.size() != n / 2) {
    tw_re.resize(n / 2);
    tw_im.resize(n / 2);
    for (size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      tw_re[k] = std::cos(angle);
      tw_im[k] = std::sin(angle);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const size_t half = len / 2;
    const size_t stride = n / len;
    for (size_t i = 0; i < n; i += len) {
      for (size_t k = 0; k < half; ++k) {
        const double wr = tw_re[k * stride], wi = tw_im[k * stride];
        const double xr = a[i + k + half].real(), xi = a[i + k + half].imag();
        const double vr = xr * wr - xi * wi, vi = xr * wi + xi * wr;
        const double ur = a[i + k].real(), ui = a[i + k].imag();
        a[i + k] = {ur + vr, ui + vi};
        a[i + k + half] = {ur - vr, ui - vi};
      }
    }
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

int FbankConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * sample_rate_hz / 1000.0));
}

int FbankConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

void FbankConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigKeyError("fbank.sample_rate_hz", "must be positive");
  if (n_mels < 1) throw ConfigKeyError("fbank.n_mels", "must be >= 1");
  if (window_samples() < 1) throw ConfigKeyError("fbank.window_ms", "window has no samples");
  if (hop_samples() < 1) throw ConfigKeyError("fbank.hop_ms", "hop has no samples");
  if (!is_power_of_two(fft_size)) throw ConfigKeyError("fbank.fft_size", "must be a power of two");
  if (fft_size < window_samples()) {
    throw ConfigKeyError("fbank.fft_size", "must be >= window length in samples");
  }
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw ConfigKeyError("fbank.fmax_hz", "need 0 <= fmin_hz < fmax_hz <= sample_rate_hz/2");
  }
}

Waveform resample(const Waveform& w, int target_hz) {
  if (target_hz <= 0) throw ContractError("resample target rate must be positive");
  if (target_hz == w.sample_rate_hz) return w;

  const double ratio = static_cast<double>(target_hz) / w.sample_rate_hz;
  const auto n_in = static_cast<long>(w.samples.size());
  const auto n_out = static_cast<long>(std::llround(static_cast<double>(n_in) * ratio));

  // Cutoff in cycles per input sample, relative to input Nyquist.
  const double cutoff = std::min(1.0, ratio);
  constexpr double kZeroCrossings = 16.0;
  const double half_width = kZeroCrossings / cutoff;

  Waveform out;
  out.sample_rate_hz = target_hz;
  out.samples.assign(static_cast<size_t>(std::max<long>(n_out, 0)), 0.0);
  for (long j = 0; j < n_out; ++j) {
    const double x = static_cast<double>(j) / ratio;
    const long lo = std::max<long>(0, static_cast<long>(std::ceil(x - half_width)));
    const long hi = std::min<long>(n_in - 1, static_cast<long>(std::floor(x + half_width)));
    double acc = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double tau = x - static_cast<double>(i);
      const double arg = cutoff * tau;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double hann = 0.5 + 0.5 * std::cos(std::numbers::pi * tau / half_width);
      acc += w.samples[static_cast<size_t>(i)] * cutoff * sinc * hann;
    }
    out.samples[static_cast<size_t>(j)] = acc;
  }
  return out;
}

int frame_count(std::size_t num_samples, const FbankConfig& cfg) {
  const auto win = static_cast<std::size_t>(cfg.window_samples());
  if (num_samples < win) return 0;
  return 1 + static_cast<int>((num_samples - win) / static_cast<std::size_t>(cfg.hop_samples()));
}

std::vector<double> hamming_window(int length) {
  std::vector<double> win(static_cast<size_t>(length), 1.0);
  if (length == 1) return win;
  for (int n = 0; n < length; ++n) {
    win[static_cast<size_t>(n)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  }
  return win;
}

Frames frame_and_window(const Waveform& w, const FbankConfig& cfg) {
  cfg.validate();
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const int count = frame_count(w.samples.size(), cfg);
  if (count < 1) {
    throw TooShortError("audio has " + std::to_string(w.samples.size()) +
                        " samples, fewer than one window of " + std::to_string(win));
  }
  const auto window = hamming_window(win);

  Frames frames;
  frames.count = count;
  frames.fft_size = cfg.fft_size;
  frames.values.assign(static_cast<size_t>(count) * cfg.fft_size, 0.0);
  for (int t = 0; t < count; ++t) {
    const double* src = w.samples.data() + static_cast<size_t>(t) * hop;
    double* dst = frames.values.data() + static_cast<size_t>(t) * cfg.fft_size;
    for (int n = 0; n < win; ++n) dst[n] = src[n] * window[static_cast<size_t>(n)];
  }
  return frames;
}

std::vector<double> power_spectrum(std::span<const double> frame, int fft_size) {
  if (!is_power_of_two(fft_size)) throw ContractError("fft_size must be a power of two");
  if (frame.size() != static_cast<size_t>(fft_size)) {
    throw ContractError("frame length must equal fft_size");
  }
  std::vector<std::complex<double>> buf(frame.begin(), frame.end());
  fft_inplace(buf);
  std::vector<double> power(static_cast<size_t>(fft_size / 2 + 1));
  for (size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
  return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank_matrix(const FbankConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);

  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (size_t i = 0; i < edges.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (cfg.n_mels + 1);
    edges[i] = mel_to_hz(mel);
  }

  MelFilterbank fb;
  fb.n_mels = cfg.n_mels;
  fb.n_bins = n_bins;
  fb.weights.assign(static_cast<size_t>(cfg.n_mels) * n_bins, 0.0);
  fb.center_hz.resize(static_cast<size_t>(cfg.n_mels));
  const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[static_cast<size_t>(m)];
    const double center = edges[static_cast<size_t>(m) + 1];
    const double right = edges[static_cast<size_t>(m) + 2];
    fb.center_hz[static_cast<size_t>(m)] = center;
    bool any = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      const double v = std::max(0.0, std::min(rise, fall));
      fb.weights[static_cast<size_t>(m) * n_bins + k] = v;
      any = any || v > 0.0;
    }
    if (!any) {
      throw ConfigKeyError("fbank.n_mels", "filter " + std::to_string(m) +
                                               " covers no FFT bin; too many mels for fft_size");
    }
  }
  return fb;
}

FeatureMatrix log_fbank(const Waveform& w, const FbankConfig& cfg) {
  if (w.sample_rate_hz != cfg.sample_rate_hz) {
    throw ContractError("waveform rate " + std::to_string(w.sample_rate_hz) +
                        " differs from feature rate " + std::to_string(cfg.sample_rate_hz));
  }
  const Frames frames = frame_and_window(w, cfg);
  const MelFilterbank fb = mel_filterbank_matrix(cfg);

  FeatureMatrix out;
  out.frames = frames.count;
  out.n_mels = cfg.n_mels;
  out.values.resize(static_cast<size_t>(frames.count) * cfg.n_mels);
  // Nonzero span of each triangle; skipped terms are exact zeros.
  std::vector<std::pair<int, int>> span(static_cast<size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    int lo = fb.n_bins, hi = 0;
    for (int k = 0; k < fb.n_bins; ++k)
      if (fb.at(m, k) != 0.0) {
        lo = std::min(lo, k);
        hi = k + 1;
      }
    span[static_cast<size_t>(m)] = {lo, hi};
  }
  for (int t = 0; t < frames.count; ++t) {
    const auto power = power_spectrum(frames.frame(t), cfg.fft_size);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double* row = fb.weights.data() + static_cast<size_t>(m) * fb.n_bins;
      double energy = 0.0;
      const auto [lo, hi] = span[static_cast<size_t>(m)];
      for (int k = lo; k < hi; ++k) energy += row[k] * power[static_cast<size_t>(k)];
      out.values[static_cast<size_t>(t) * cfg.n_mels + m] =
          static_cast<float>(std::log(std::max(energy, kLogFloor)));
    }
  }
  return out;
}

void write_features(const std::filesystem::path& path, const FeatureMatrix& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("AFB1", 4);
  put_u32(out, static_cast<std::uint32_t>(f.frames));
  put_u32(out, static_cast<std::uint32_t>(f.n_mels));
  for (float v : f.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IoError("short write to " + path.string());
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "AFB1", 4) != 0) {
    throw FormatError(path.string() + ": bad feature file magic");
  }
  FeatureMatrix f;
  f.frames = static_cast<int>(get_u32(in));
  f.n_mels = static_cast<int>(get_u32(in));
  f.values.resize(static_cast<size_t>(f.frames) * f.n_mels);
  for (auto& v : f.values) v = std::bit_cast<float>(get_u32(in));
  return f;
}

}  // namespace audiomod::audiofe
