#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "audiomod/audiofe.hpp"
#include "audiomod/errors.hpp"

namespace audiomod::audiofe {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const std::uint8_t> b, size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

double decode_sample(std::span<const std::uint8_t> b, size_t at, std::uint16_t format, int bits) {
  if (format == kFormatFloat) {
    float f;
    std::uint32_t raw = read_u32(b, at);
    std::memcpy(&f, &raw, sizeof f);
    return static_cast<double>(f);
  }
  switch (bits) {
    case 8:
      return (static_cast<double>(b[at]) - 128.0) / 128.0;
    case 16:
      return static_cast<double>(static_cast<std::int16_t>(read_u16(b, at))) / 32768.0;
    case 32:
      return static_cast<double>(static_cast<std::int32_t>(read_u32(b, at))) / 2147483648.0;
    default:
      throw UnsupportedError("unsupported PCM bit depth " + std::to_string(bits));
  }
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw FormatError("not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0;
  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Some writers leave a bogus data size; clamp the final data chunk.
      if (tag_is(bytes, pos, "data")) {
        data = bytes.subspan(body);
        have_data = true;
        break;
      }
      throw FormatError("chunk extends past end of file");
    }
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16) throw FormatError("fmt chunk too small");
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      sample_rate = static_cast<int>(read_u32(bytes, body + 4));
      bits = read_u16(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw FormatError("extensible fmt chunk too small");
        format = read_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      data = bytes.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (!have_data) throw FormatError("missing data chunk");
  if (channels < 1) throw FormatError("channel count is zero");
  if (sample_rate <= 0) throw FormatError("sample rate is zero");
  if (format == kFormatFloat) {
    if (bits != 32) throw UnsupportedError("float WAV must be 32-bit, got " + std::to_string(bits));
  } else if (format == kFormatPcm) {
    if (bits != 8 && bits != 16 && bits != 32) {
      throw UnsupportedError("unsupported PCM bit depth " + std::to_string(bits));
    }
  } else {
    throw UnsupportedError("unsupported WAV encoding tag " + std::to_string(format));
  }

  const size_t bytes_per_sample = static_cast<size_t>(bits / 8);
  const size_t frame_bytes = bytes_per_sample * static_cast<size_t>(channels);
  const size_t n_frames = data.size() / frame_bytes;
  if (n_frames == 0) throw FormatError("data chunk holds no samples");

  Waveform w;
  w.sample_rate_hz = sample_rate;
  w.samples.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += decode_sample(data, i * frame_bytes + static_cast<size_t>(c) * bytes_per_sample,
                           format, bits);
    }
    const double v = acc / channels;
    if (!std::isfinite(v)) throw FormatError("non-finite sample at frame " + std::to_string(i));
    w.samples[i] = v;
  }
  return w;
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * static_cast<size_t>(n));
  put_tag(out, "RIFF");
  put_u32(out, 36 + 2 * n);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, 2 * n);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(clipped * 32768.0, -32768.0, 32767.0)));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w) {
  const auto bytes = encode_wav_pcm16(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace audiomod::audiofe
