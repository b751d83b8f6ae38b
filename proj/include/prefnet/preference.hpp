// SPDX-License-Identifier: Apache-2.0
/**
 * @file   preference.hpp
 * @brief  MUSHRA ratings to pairwise preference labels, manifests and folds.
 */
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prefnet::data {

struct MushraRecord {
  std::string evaluation_id;
  std::string screen_id;
  std::string listener_id;
  std::string system_id;
  std::string utterance_id;
  int score = 0;  ///< 0..100
  std::string audio_path;

  bool operator==(const MushraRecord&) const = default;
};

/**
 * One stimulus pair of a screen. `label` is the fraction of listeners who
 * rated A above B, ties counting one half. system_a < system_b.
 */
struct PreferencePair {
  std::string evaluation_id;
  std::string utterance_id;
  std::string system_a;
  std::string system_b;
  std::string audio_a;
  std::string audio_b;
  double label = 0.5;
  int n_listeners = 0;
  std::string eval_date;    ///< ISO date, empty when unknown
  std::optional<int> fold;  ///< set once folds are assigned

  /// The same pair read B-first: systems and audio swapped, label 1 - p.
  PreferencePair reversed() const;

  bool operator==(const PreferencePair&) const = default;
};

inline constexpr const char* kMushraHeader =
    "evaluation_id,screen_id,listener_id,system_id,utterance_id,score,audio_path";

std::vector<MushraRecord> parse_mushra_csv(const std::filesystem::path& path);
std::vector<MushraRecord> parse_mushra_csv(std::istream& in, const std::string& source);
void write_mushra_csv(const std::filesystem::path& path, std::span<const MushraRecord> records);
void write_mushra_csv(std::ostream& out, std::span<const MushraRecord> records);

/**
 * Every unordered system pair on every screen, scored by the listeners who
 * rated both systems. Pairs with no common listener are dropped and a
 * message is appended to `warnings`. Output is sorted by
 * (evaluation_id, utterance_id, system_a, system_b).
 */
std::vector<PreferencePair> build_preference_pairs(std::span<const MushraRecord> records,
                                                   std::vector<std::string>* warnings = nullptr);

/// evaluation_id -> ISO date, from a CSV with header `evaluation_id,date`.
std::map<std::string, std::string> read_dates_csv(const std::filesystem::path& path);

struct FoldSpec {
  int n_folds = 0;
  std::map<std::string, int> assignment;  ///< evaluation_id -> fold index

  int fold_of(const std::string& evaluation_id) const;
};

/**
 * Chronological contiguous blocks of whole evaluations; block sizes differ
 * by at most one and earlier blocks take the remainder. Ties in date are
 * broken by evaluation_id.
 */
FoldSpec split_folds(std::span<const PreferencePair> pairs, int n_folds,
                     const std::map<std::string, std::string>& dates);

/// Copies each evaluation's date and fold into its pairs.
void apply_folds(std::vector<PreferencePair>& pairs, const FoldSpec& folds,
                 const std::map<std::string, std::string>& dates);

// JSON-lines manifest, one pair per line in canonical field order.
void write_manifest(std::span<const PreferencePair> pairs, const std::filesystem::path& path);
void write_manifest(std::span<const PreferencePair> pairs, std::ostream& out);
std::vector<PreferencePair> read_manifest(const std::filesystem::path& path);
std::vector<PreferencePair> read_manifest(std::istream& in, const std::string& source);

/// Minimal RFC 4180 field splitting (quoted fields, doubled quotes).
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_field(const std::string& value);

}  // namespace prefnet::data
