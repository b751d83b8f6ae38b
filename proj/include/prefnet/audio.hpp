// SPDX-License-Identifier: Apache-2.0
/**
 * @file   audio.hpp
 * @brief  WAV I/O, resampling and log-mel feature extraction.
 *
 * Feature convention (fixed so checkpoints are portable): left-aligned
 * frames, Hann window, magnitude spectrum, triangular mel filters on the
 * 2595*log10(1 + f/700) scale with Slaney area normalisation
 * (2 / (f_upper - f_lower)), natural log of (energy + log_floor).
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prefnet/common.hpp"

namespace prefnet::audio {

struct Waveform {
  std::vector<double> samples;  ///< amplitudes in [-1, 1]
  int sample_rate = 0;          ///< Hz

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Throws DataError unless the rate is positive and every sample is finite and in [-1, 1].
void validate(const Waveform& w);

/// Reads a RIFF/WAVE file with mono 16-bit integer PCM.
Waveform load_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM. Samples are scaled by 32768, rounded and clipped.
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// Windowed-sinc polyphase resampling; output length is round(N * target / source).
Waveform resample(const Waveform& w, int target_rate);

struct MelConfig {
  int sample_rate = 16000;
  int window_length = 512;
  int hop_length = 200;
  int n_mels = 64;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  int n_bins() const { return window_length / 2 + 1; }
  void validate() const;
};

struct MelSpectrogram {
  Mat<float> frames;  ///< (N, n_mels), natural-log magnitudes

  Eigen::Index n_frames() const { return frames.rows(); }
  Eigen::Index n_mels() const { return frames.cols(); }
};

/// Frame count for a signal of `length` samples (short inputs give one padded frame).
std::int64_t frame_count(std::int64_t length, const MelConfig& cfg);

struct MelFilterbank {
  Mat<double> weights;             ///< (n_mels, n_bins)
  std::vector<double> center_hz;   ///< one per filter, strictly increasing
  std::vector<double> lower_hz;
  std::vector<double> upper_hz;
};

MelFilterbank mel_filterbank(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Requires w.sample_rate == cfg.sample_rate; throws DataError on empty input.
MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

/// load_wav -> resample (if needed) -> mel_spectrogram.
MelSpectrogram features_from_wav(const std::filesystem::path& path, const MelConfig& cfg = {});

// Feature cache: 16-byte header {magic "PNMF", u32 version, u32 frames,
// u32 mels} followed by row-major little-endian float32 values.
void write_feature_cache(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram read_feature_cache(const std::filesystem::path& path);

/**
 * Lazily computed features keyed by the audio path as written in a
 * manifest. Relative paths resolve against `root`. With a cache directory,
 * features are also read from / written to one cache file per waveform.
 * Not thread-safe; returned references stay valid for the store's lifetime.
 */
class FeatureStore {
 public:
  explicit FeatureStore(std::filesystem::path root = {}, MelConfig cfg = {},
                        std::optional<std::filesystem::path> cache_dir = std::nullopt);

  const MelSpectrogram& get(const std::string& audio_path);
  void insert(const std::string& audio_path, MelSpectrogram mel);
  std::filesystem::path resolve(const std::string& audio_path) const;
  const MelConfig& config() const { return cfg_; }

 private:
  std::filesystem::path root_;
  MelConfig cfg_;
  std::optional<std::filesystem::path> cache_dir_;
  std::map<std::string, MelSpectrogram> features_;
};

}  // namespace prefnet::audio
