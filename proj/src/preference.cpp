// SPDX-License-Identifier: Apache-2.0
#include "prefnet/preference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "prefnet/common.hpp"

namespace prefnet::data {

namespace fs = std::filesystem;

PreferencePair PreferencePair::reversed() const {
  PreferencePair r = *this;
  std::swap(r.system_a, r.system_b);
  std::swap(r.audio_a, r.audio_b);
  r.label = 1.0 - label;
  return r;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

void strip_line(std::string& line, bool first) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (first && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
}

std::string where(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no);
}

}  // namespace

std::vector<MushraRecord> parse_mushra_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file, expected header");
  strip_line(line, true);
  if (line != kMushraHeader) {
    throw DataError(where(source, 1) + ": expected header '" + kMushraHeader + "'");
  }

  std::vector<MushraRecord> records;
  std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_line(line, false);
    if (line.empty()) continue;
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const DataError& e) {
      throw DataError(where(source, line_no) + ": " + e.what());
    }
    if (f.size() != 7) {
      throw DataError(where(source, line_no) + ": expected 7 fields, found " + std::to_string(f.size()));
    }
    for (int i : {0, 1, 2, 3}) {
      if (f[i].empty()) throw DataError(where(source, line_no) + ": empty identifier field");
    }
    MushraRecord r{f[0], f[1], f[2], f[3], f[4], 0, f[6]};
    const auto& s = f[5];
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), r.score);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw DataError(where(source, line_no) + ": score '" + s + "' is not an integer");
    }
    if (r.score < 0 || r.score > 100) {
      throw DataError(where(source, line_no) + ": score " + s + " outside [0, 100]");
    }
    if (!seen.emplace(r.evaluation_id, r.screen_id, r.listener_id, r.system_id).second) {
      throw DataError(where(source, line_no) + ": duplicate rating for listener '" + r.listener_id +
                      "', system '" + r.system_id + "' on screen '" + r.screen_id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<MushraRecord> parse_mushra_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file: " + path.string());
  return parse_mushra_csv(in, path.string());
}

void write_mushra_csv(std::ostream& out, std::span<const MushraRecord> records) {
  out << kMushraHeader << '\n';
  for (const auto& r : records) {
    out << csv_field(r.evaluation_id) << ',' << csv_field(r.screen_id) << ','
        << csv_field(r.listener_id) << ',' << csv_field(r.system_id) << ','
        << csv_field(r.utterance_id) << ',' << r.score << ',' << csv_field(r.audio_path) << '\n';
  }
}

void write_mushra_csv(const fs::path& path, std::span<const MushraRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ratings file: " + path.string());
  write_mushra_csv(out, records);
}

std::vector<PreferencePair> build_preference_pairs(std::span<const MushraRecord> records,
                                                   std::vector<std::string>* warnings) {
  // (evaluation, screen) -> system -> listener -> record
  using ListenerMap = std::map<std::string, const MushraRecord*>;
  std::map<std::pair<std::string, std::string>, std::map<std::string, ListenerMap>> screens;
  for (const auto& r : records) {
    auto& slot = screens[{r.evaluation_id, r.screen_id}][r.system_id][r.listener_id];
    if (slot != nullptr) {
      throw DataError("duplicate rating for listener '" + r.listener_id + "', system '" +
                      r.system_id + "' on screen '" + r.screen_id + "'");
    }
    slot = &r;
  }

  std::vector<PreferencePair> pairs;
  for (const auto& [key, systems] : screens) {
    for (auto a = systems.begin(); a != systems.end(); ++a) {
      for (auto b = std::next(a); b != systems.end(); ++b) {
        // twice the preference sum keeps the arithmetic in integers
        long twice_sum = 0;
        int n = 0;
        for (const auto& [listener, rec_a] : a->second) {
          const auto it = b->second.find(listener);
          if (it == b->second.end()) continue;
          const int sa = rec_a->score, sb = it->second->score;
          twice_sum += sa > sb ? 2 : (sa == sb ? 1 : 0);
          ++n;
        }
        if (n == 0) {
          if (warnings) {
            warnings->push_back("evaluation '" + key.first + "', screen '" + key.second +
                                "': systems '" + a->first + "' and '" + b->first +
                                "' share no listener; pair omitted");
          }
          continue;
        }
        const MushraRecord& ra = *a->second.begin()->second;
        const MushraRecord& rb = *b->second.begin()->second;
        PreferencePair p;
        p.evaluation_id = key.first;
        p.utterance_id = ra.utterance_id;
        p.system_a = a->first;
        p.system_b = b->first;
        p.audio_a = ra.audio_path;
        p.audio_b = rb.audio_path;
        p.label = static_cast<double>(twice_sum) / (2.0 * n);
        p.n_listeners = n;
        pairs.push_back(std::move(p));
      }
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    return std::tie(x.evaluation_id, x.utterance_id, x.system_a, x.system_b) <
           std::tie(y.evaluation_id, y.utterance_id, y.system_a, y.system_b);
  });
  return pairs;
}

std::map<std::string, std::string> read_dates_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dates file: " + path.string());
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file, expected header");
  strip_line(line, true);
  if (line != "evaluation_id,date") {
    throw DataError(where(source, 1) + ": expected header 'evaluation_id,date'");
  }
  std::map<std::string, std::string> dates;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_line(line, false);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw DataError(where(source, line_no) + ": expected 'evaluation_id,date'");
    }
    if (!dates.emplace(f[0], f[1]).second) {
      throw DataError(where(source, line_no) + ": duplicate evaluation '" + f[0] + "'");
    }
  }
  return dates;
}

int FoldSpec::fold_of(const std::string& evaluation_id) const {
  const auto it = assignment.find(evaluation_id);
  if (it == assignment.end()) throw DataError("evaluation '" + evaluation_id + "' has no fold");
  return it->second;
}

FoldSpec split_folds(std::span<const PreferencePair> pairs, int n_folds,
                     const std::map<std::string, std::string>& dates) {
  std::set<std::string> evaluations;
  for (const auto& p : pairs) evaluations.insert(p.evaluation_id);

  std::vector<std::pair<std::string, std::string>> ordered;  // (date, id)
  for (const auto& id : evaluations) {
    const auto it = dates.find(id);
    if (it == dates.end()) throw DataError("no date for evaluation '" + id + "'");
    ordered.emplace_back(it->second, id);
  }
  const int n_evals = static_cast<int>(ordered.size());
  if (n_folds < 1 || n_folds > n_evals) {
    throw DataError("cannot split " + std::to_string(n_evals) + " evaluations into " +
                    std::to_string(n_folds) + " folds");
  }
  std::sort(ordered.begin(), ordered.end());

  FoldSpec spec;
  spec.n_folds = n_folds;
  const int base = n_evals / n_folds;
  const int extra = n_evals % n_folds;
  int idx = 0;
  for (int fold = 0; fold < n_folds; ++fold) {
    const int size = base + (fold < extra ? 1 : 0);
    for (int k = 0; k < size; ++k) spec.assignment[ordered[idx++].second] = fold;
  }
  return spec;
}

void apply_folds(std::vector<PreferencePair>& pairs, const FoldSpec& folds,
                 const std::map<std::string, std::string>& dates) {
  for (auto& p : pairs) {
    p.fold = folds.fold_of(p.evaluation_id);
    if (const auto it = dates.find(p.evaluation_id); it != dates.end()) p.eval_date = it->second;
  }
}

namespace {

nlohmann::ordered_json to_json(const PreferencePair& p) {
  nlohmann::ordered_json j;
  j["evaluation_id"] = p.evaluation_id;
  j["utterance_id"] = p.utterance_id;
  j["system_a"] = p.system_a;
  j["system_b"] = p.system_b;
  j["audio_a"] = p.audio_a;
  j["audio_b"] = p.audio_b;
  j["label"] = p.label;
  j["n_listeners"] = p.n_listeners;
  j["eval_date"] = p.eval_date;
  if (p.fold) j["fold"] = *p.fold;
  return j;
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& at) {
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(at + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(at + ": field '" + key + "' has the wrong type");
  }
}

PreferencePair from_json(const nlohmann::json& j, const std::string& at) {
  if (!j.is_object()) throw DataError(at + ": expected a JSON object");
  PreferencePair p;
  p.evaluation_id = required<std::string>(j, "evaluation_id", at);
  p.utterance_id = required<std::string>(j, "utterance_id", at);
  p.system_a = required<std::string>(j, "system_a", at);
  p.system_b = required<std::string>(j, "system_b", at);
  p.audio_a = required<std::string>(j, "audio_a", at);
  p.audio_b = required<std::string>(j, "audio_b", at);
  if (!j.contains("label") || !j["label"].is_number()) {
    throw DataError(at + ": field 'label' must be a number");
  }
  p.label = j["label"].get<double>();
  if (!(p.label >= 0.0 && p.label <= 1.0)) throw DataError(at + ": label outside [0, 1]");
  if (!j.contains("n_listeners") || !j["n_listeners"].is_number_integer()) {
    throw DataError(at + ": field 'n_listeners' must be an integer");
  }
  p.n_listeners = j["n_listeners"].get<int>();
  if (p.n_listeners < 1) throw DataError(at + ": n_listeners must be positive");
  p.eval_date = required<std::string>(j, "eval_date", at);
  if (j.contains("fold")) {
    if (!j["fold"].is_number_integer() || j["fold"].get<int>() < 0) {
      throw DataError(at + ": field 'fold' must be a non-negative integer");
    }
    p.fold = j["fold"].get<int>();
  }
  return p;
}

}  // namespace

void write_manifest(std::span<const PreferencePair> pairs, std::ostream& out) {
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

void write_manifest(std::span<const PreferencePair> pairs, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  write_manifest(pairs, out);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<PreferencePair> read_manifest(std::istream& in, const std::string& source) {
  std::vector<PreferencePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_line(line, line_no == 1);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where(source, line_no) + ": invalid JSON (" + e.what() + ")");
    }
    pairs.push_back(from_json(j, where(source, line_no)));
  }
  return pairs;
}

std::vector<PreferencePair> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  return read_manifest(in, path.string());
}

}  // namespace prefnet::data
