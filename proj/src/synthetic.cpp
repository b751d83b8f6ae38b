// SPDX-License-Identifier: Apache-2.0
#include "prefnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "prefnet/common.hpp"

namespace prefnet::synth {

namespace fs = std::filesystem;

namespace {

std::string utterance(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "utt%04d", index);
  return buf;
}

std::string evaluation(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "eval%02d", k + 1);
  return buf;
}

std::string audio_path(int index, const char* system) {
  return "audio/" + utterance(index) + "_" + system + ".wav";
}

}  // namespace

std::pair<audio::Waveform, audio::Waveform> tone_pair(const SynthConfig& cfg, int index) {
  Rng rng(derive_seed(cfg.seed, "synth-pair-" + std::to_string(index)));
  const double freq = rng.uniform(150.0, 600.0);
  const double amp = rng.uniform(0.3, 0.6);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const auto n = static_cast<std::size_t>(std::llround(cfg.seconds * cfg.sample_rate));

  audio::Waveform clean{std::vector<double>(n), cfg.sample_rate};
  for (std::size_t i = 0; i < n; ++i) {
    clean.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / cfg.sample_rate + phase);
  }
  const double signal_rms = amp / std::sqrt(2.0);
  const double noise_rms = signal_rms / std::pow(10.0, cfg.snr_db / 20.0);
  audio::Waveform noisy = clean;
  for (auto& s : noisy.samples) s = std::clamp(s + noise_rms * rng.normal(), -1.0, 1.0);
  return {std::move(clean), std::move(noisy)};
}

SynthCorpus synthetic_ratings(const SynthConfig& cfg) {
  if (cfg.n_pairs < 1 || cfg.n_evaluations < 1 || cfg.n_evaluations > cfg.n_pairs) {
    throw DataError("synth: need 1 <= evaluations <= pairs");
  }
  if (cfg.listeners < 1) throw DataError("synth: need at least one listener");
  SynthCorpus corpus;
  Rng rng(derive_seed(cfg.seed, "synth-scores"));
  for (int k = 0; k < cfg.n_evaluations; ++k) {
    char date[16];
    std::snprintf(date, sizeof date, "%04d-%02d-01", 2014 + k / 12, k % 12 + 1);
    corpus.dates[evaluation(k)] = date;
  }
  for (int i = 0; i < cfg.n_pairs; ++i) {
    // contiguous blocks of screens per evaluation
    const int k = static_cast<int>(static_cast<long>(i) * cfg.n_evaluations / cfg.n_pairs);
    for (int l = 0; l < cfg.listeners; ++l) {
      const int clean = 60 + static_cast<int>(rng.below(41));
      const int noisy = static_cast<int>(rng.below(51));
      const std::string listener = "L" + std::to_string(l + 1);
      corpus.ratings.push_back({evaluation(k), "screen" + std::to_string(i), listener, "clean",
                                utterance(i), clean, audio_path(i, "clean")});
      corpus.ratings.push_back({evaluation(k), "screen" + std::to_string(i), listener, "noisy",
                                utterance(i), noisy, audio_path(i, "noisy")});
    }
  }
  return corpus;
}

SynthCorpus write_synthetic_corpus(const fs::path& dir, const SynthConfig& cfg) {
  SynthCorpus corpus = synthetic_ratings(cfg);
  fs::create_directories(dir / "audio");
  for (int i = 0; i < cfg.n_pairs; ++i) {
    const auto [clean, noisy] = tone_pair(cfg, i);
    audio::write_wav(dir / audio_path(i, "clean"), clean);
    audio::write_wav(dir / audio_path(i, "noisy"), noisy);
  }
  data::write_mushra_csv(dir / "ratings.csv", corpus.ratings);
  std::ofstream dates(dir / "dates.csv");
  dates << "evaluation_id,date\n";
  for (const auto& [id, date] : corpus.dates) dates << id << ',' << date << '\n';
  if (!dates) throw DataError("cannot write " + (dir / "dates.csv").string());
  return corpus;
}

std::vector<data::PreferencePair> synthetic_pairs_in_memory(const SynthConfig& cfg,
                                                            audio::FeatureStore& features) {
  const SynthCorpus corpus = synthetic_ratings(cfg);
  auto pairs = data::build_preference_pairs(corpus.ratings);
  audio::MelConfig mel_cfg = features.config();
  for (int i = 0; i < cfg.n_pairs; ++i) {
    auto [clean, noisy] = tone_pair(cfg, i);
    if (clean.sample_rate != mel_cfg.sample_rate) {
      clean = audio::resample(clean, mel_cfg.sample_rate);
      noisy = audio::resample(noisy, mel_cfg.sample_rate);
    }
    features.insert(audio_path(i, "clean"), audio::mel_spectrogram(clean, mel_cfg));
    features.insert(audio_path(i, "noisy"), audio::mel_spectrogram(noisy, mel_cfg));
  }
  for (auto& p : pairs) p.eval_date = corpus.dates.at(p.evaluation_id);
  return pairs;
}

}  // namespace prefnet::synth
