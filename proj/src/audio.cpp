// SPDX-License-Identifier: Apache-2.0
#include "prefnet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"

namespace prefnet::audio {

namespace fs = std::filesystem;
using detail::get_bytes;
using detail::get_le;
using detail::put_le;

void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw DataError("waveform: sample rate must be positive");
  for (double s : w.samples) {
    if (!std::isfinite(s) || s < -1.0 || s > 1.0) {
      throw DataError("waveform: samples must be finite and within [-1, 1]");
    }
  }
}

Waveform load_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path.string());
  const std::string what = "wav " + path.string();

  if (get_bytes(in, 4, what) != "RIFF") throw DataError(what + ": not a RIFF file");
  get_le<std::uint32_t>(in, what);
  if (get_bytes(in, 4, what) != "WAVE") throw DataError(what + ": not a WAVE file");

  bool have_fmt = false;
  Waveform w;
  for (;;) {
    char id[4];
    in.read(id, 4);
    if (in.gcount() != 4) break;
    const auto size = get_le<std::uint32_t>(in, what);
    const std::string chunk(id, 4);
    if (chunk == "fmt ") {
      if (size < 16) throw DataError(what + ": fmt chunk too short");
      const auto format = get_le<std::uint16_t>(in, what);
      const auto channels = get_le<std::uint16_t>(in, what);
      const auto rate = get_le<std::uint32_t>(in, what);
      get_le<std::uint32_t>(in, what);  // byte rate
      get_le<std::uint16_t>(in, what);  // block align
      const auto bits = get_le<std::uint16_t>(in, what);
      std::string rest = get_bytes(in, size - 16 + (size & 1u), what);
      bool pcm = format == 1;
      // WAVE_FORMAT_EXTENSIBLE carries the real format code in its sub-format GUID
      if (format == 0xFFFE && rest.size() >= 10) {
        std::uint16_t sub;
        std::memcpy(&sub, rest.data() + 8, 2);
        pcm = sub == 1;
      }
      if (!pcm) throw DataError(what + ": unsupported encoding (only integer PCM)");
      if (channels != 1) throw DataError(what + ": unsupported channel count " + std::to_string(channels));
      if (bits != 16) throw DataError(what + ": unsupported bit depth " + std::to_string(bits));
      if (rate == 0) throw DataError(what + ": zero sample rate");
      w.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) throw DataError(what + ": data chunk before fmt chunk");
      const std::string raw = get_bytes(in, size, what);
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        std::int16_t v;
        std::memcpy(&v, raw.data() + 2 * i, 2);
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return w;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
      if (!in) throw DataError(what + ": truncated chunk '" + chunk + "'");
    }
  }
  throw DataError(what + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

void write_wav(const fs::path& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw DataError("write_wav: sample rate must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio file: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_le<std::uint16_t>(out, 2);
  put_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_le<std::int16_t>(out, static_cast<std::int16_t>(scaled));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 32;

double kaiser(double x) {  // x in [-1, 1]
  if (std::abs(x) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - x * x)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

}  // namespace

Waveform resample(const Waveform& w, int target_rate) {
  validate(w);
  if (target_rate <= 0) throw DataError("resample: target rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const std::uint64_t g = std::gcd(w.sample_rate, target_rate);
  const std::uint64_t up = target_rate / g;
  const std::uint64_t down = w.sample_rate / g;
  const std::size_t n_in = w.samples.size();
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * target_rate / w.sample_rate));

  // cutoff relative to the input Nyquist, slightly below the lower of the two rates
  const double cutoff = 0.97 * std::min(1.0, static_cast<double>(up) / down);
  const int half = static_cast<int>(std::ceil(kZeroCrossings / cutoff));
  const int taps = 2 * half;

  auto kernel = [&](double offset) {
    return cutoff * sinc(cutoff * offset) * kaiser(offset / (half + 1));
  };

  // one filter per output phase when the table is of reasonable size
  const bool tabulate = up * taps <= (1u << 22);
  std::vector<double> table;
  if (tabulate) {
    table.resize(up * taps);
    for (std::uint64_t p = 0; p < up; ++p) {
      const double frac = static_cast<double>(p) / up;
      for (int j = 0; j < taps; ++j) {
        table[p * taps + j] = kernel(frac - (j - half + 1));
      }
    }
  }

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::uint64_t pos = n * down;
    const auto base = static_cast<std::int64_t>(pos / up);
    const std::uint64_t phase = pos % up;
    double acc = 0.0;
    for (int j = 0; j < taps; ++j) {
      const std::int64_t k = base + j - half + 1;
      if (k < 0 || k >= static_cast<std::int64_t>(n_in)) continue;
      const double h = tabulate ? table[phase * taps + j]
                                : kernel(static_cast<double>(phase) / up - (j - half + 1));
      acc += w.samples[static_cast<std::size_t>(k)] * h;
    }
    out.samples[n] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

void MelConfig::validate() const {
  if (sample_rate <= 0) throw DataError("mel config: sample_rate must be positive");
  if (window_length < 2) throw DataError("mel config: window_length must be at least 2");
  if (hop_length < 1 || hop_length > window_length) {
    throw DataError("mel config: need 1 <= hop_length <= window_length");
  }
  if (n_mels < 1) throw DataError("mel config: n_mels must be positive");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw DataError("mel config: need 0 <= fmin < fmax <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) throw DataError("mel config: log_floor must be positive");
}

std::int64_t frame_count(std::int64_t length, const MelConfig& cfg) {
  if (length <= 0) return 0;
  if (length < cfg.window_length) return 1;
  return 1 + (length - cfg.window_length) / cfg.hop_length;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.n_bins();
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }

  MelFilterbank fb;
  fb.weights = Mat<double>::Zero(cfg.n_mels, n_bins);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.window_length;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      fb.weights(m, k) = std::max(0.0, std::min(rise, fall)) * norm;
    }
    fb.lower_hz.push_back(lo);
    fb.center_hz.push_back(mid);
    fb.upper_hz.push_back(hi);
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.samples.empty()) throw DataError("mel_spectrogram: empty waveform");
  if (w.sample_rate != cfg.sample_rate) {
    throw DataError("mel_spectrogram: waveform rate " + std::to_string(w.sample_rate) +
                    " Hz differs from configured " + std::to_string(cfg.sample_rate) +
                    " Hz; resample first");
  }

  const int win = cfg.window_length;
  const int n_bins = cfg.n_bins();
  const auto n_frames = frame_count(static_cast<std::int64_t>(w.samples.size()), cfg);

  Mat<double> frames = Mat<double>::Zero(n_frames, win);
  for (std::int64_t t = 0; t < n_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_length;
    for (int i = 0; i < win && start + i < w.samples.size(); ++i) {
      const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
      frames(t, i) = w.samples[start + i] * hann;
    }
  }

  Mat<double> cos_basis(win, n_bins), sin_basis(win, n_bins);
  for (int i = 0; i < win; ++i) {
    for (int k = 0; k < n_bins; ++k) {
      // reduce the phase index first so the angle stays small and exact
      const auto idx = (static_cast<std::int64_t>(i) * k) % win;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(idx) / win;
      cos_basis(i, k) = std::cos(angle);
      sin_basis(i, k) = std::sin(angle);
    }
  }
  const Mat<double> re = frames * cos_basis;
  const Mat<double> im = frames * sin_basis;
  const Mat<double> magnitude = (re.array().square() + im.array().square()).sqrt().matrix();

  const MelFilterbank fb = mel_filterbank(cfg);
  const Mat<double> energies = magnitude * fb.weights.transpose();

  MelSpectrogram mel;
  mel.frames = (energies.array() + cfg.log_floor).log().cast<float>().matrix();
  return mel;
}

MelSpectrogram features_from_wav(const fs::path& path, const MelConfig& cfg) {
  Waveform w = load_wav(path);
  if (w.sample_rate != cfg.sample_rate) w = resample(w, cfg.sample_rate);
  return mel_spectrogram(w, cfg);
}

namespace {
constexpr char kCacheMagic[4] = {'P', 'N', 'M', 'F'};
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

void write_feature_cache(const fs::path& path, const MelSpectrogram& mel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature cache: " + path.string());
  out.write(kCacheMagic, 4);
  put_le<std::uint32_t>(out, kCacheVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mel.n_frames()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mel.n_mels()));
  out.write(reinterpret_cast<const char*>(mel.frames.data()),
            static_cast<std::streamsize>(mel.frames.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());
}

MelSpectrogram read_feature_cache(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature cache: " + path.string());
  const std::string what = "feature cache " + path.string();
  if (get_bytes(in, 4, what) != std::string(kCacheMagic, 4)) throw DataError(what + ": bad magic");
  const auto version = get_le<std::uint32_t>(in, what);
  if (version != kCacheVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  const auto rows = get_le<std::uint32_t>(in, what);
  const auto cols = get_le<std::uint32_t>(in, what);
  if (rows == 0 || cols == 0) throw DataError(what + ": empty matrix");
  MelSpectrogram mel;
  mel.frames.resize(rows, cols);
  const auto bytes = static_cast<std::streamsize>(std::size_t{rows} * cols * sizeof(float));
  in.read(reinterpret_cast<char*>(mel.frames.data()), bytes);
  if (in.gcount() != bytes) throw DataError(what + ": unexpected end of file");
  return mel;
}

}  // namespace prefnet::audio

namespace prefnet::audio {

FeatureStore::FeatureStore(fs::path root, MelConfig cfg, std::optional<fs::path> cache_dir)
    : root_(std::move(root)), cfg_(cfg), cache_dir_(std::move(cache_dir)) {
  cfg_.validate();
  if (cache_dir_) fs::create_directories(*cache_dir_);
}

fs::path FeatureStore::resolve(const std::string& audio_path) const {
  const fs::path p(audio_path);
  return p.is_absolute() || root_.empty() ? p : root_ / p;
}

const MelSpectrogram& FeatureStore::get(const std::string& audio_path) {
  if (const auto it = features_.find(audio_path); it != features_.end()) return it->second;
  const fs::path wav = resolve(audio_path);
  fs::path cached;
  if (cache_dir_) {
    // keyed on the resolved path and the feature settings so neither can collide
    std::ostringstream id;
    id << fs::absolute(wav).lexically_normal().string() << '|' << cfg_.sample_rate << '|'
       << cfg_.window_length << '|' << cfg_.hop_length << '|' << cfg_.n_mels << '|' << cfg_.fmin
       << '|' << cfg_.fmax << '|' << cfg_.log_floor;
    const auto key = std::hash<std::string>{}(id.str());
    cached = *cache_dir_ / (wav.stem().string() + "-" + std::to_string(key) + ".mel");
    if (fs::exists(cached)) {
      return features_.emplace(audio_path, read_feature_cache(cached)).first->second;
    }
  }
  if (!fs::exists(wav)) throw DataError("missing audio file: " + wav.string());
  MelSpectrogram mel = features_from_wav(wav, cfg_);
  if (cache_dir_) write_feature_cache(cached, mel);
  return features_.emplace(audio_path, std::move(mel)).first->second;
}

void FeatureStore::insert(const std::string& audio_path, MelSpectrogram mel) {
  features_.insert_or_assign(audio_path, std::move(mel));
}

}  // namespace prefnet::audio
