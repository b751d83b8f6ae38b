// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synthetic.hpp
 * @brief  Separable tone-versus-noisy-tone corpus for desk-scale training runs.
 *
 * Every screen holds two systems: "clean" (a pure tone) and "noisy" (the
 * same tone plus white noise at a fixed SNR). Every listener rates clean
 * above noisy, so each pair has label 1.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prefnet/audio.hpp"
#include "prefnet/preference.hpp"

namespace prefnet::synth {

struct SynthConfig {
  int n_pairs = 50;
  int n_evaluations = 1;
  int listeners = 3;
  double seconds = 1.0;
  int sample_rate = 16000;
  double snr_db = 5.0;
  std::uint64_t seed = 0;
};

/// Clean and noisy waveforms of pair `index`; deterministic in (seed, index).
std::pair<audio::Waveform, audio::Waveform> tone_pair(const SynthConfig& cfg, int index);

struct SynthCorpus {
  std::vector<data::MushraRecord> ratings;
  std::map<std::string, std::string> dates;  ///< evaluation_id -> ISO date
};

/// Ratings and dates only; audio paths are "audio/<utt>_<system>.wav".
SynthCorpus synthetic_ratings(const SynthConfig& cfg);

/// Writes audio/*.wav, ratings.csv and dates.csv under `dir`.
SynthCorpus write_synthetic_corpus(const std::filesystem::path& dir, const SynthConfig& cfg);

/// Pairs plus a feature store filled in memory (no files), for tests.
std::vector<data::PreferencePair> synthetic_pairs_in_memory(const SynthConfig& cfg,
                                                            audio::FeatureStore& features);

}  // namespace prefnet::synth
