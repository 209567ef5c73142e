// src/manifest.cc

// Copyright 2026  The voicepd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "voicepd/manifest.h"

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

namespace voicepd {

std::string_view to_string(Channel c) {
  return c == Channel::kHighQuality ? "highquality" : "telephone";
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::kReading: return "reading";
    case Task::kRepetition: return "repetition";
    case Task::kMonologue: return "monologue";
    case Task::kDdk: return "ddk";
  }
  return "";
}

Channel parse_channel(std::string_view s) {
  if (s == "highquality") return Channel::kHighQuality;
  if (s == "telephone") return Channel::kTelephone;
  throw ConfigError("unknown channel '" + std::string(s) +
                    "' (expected highquality or telephone)");
}

Task parse_task(std::string_view s) {
  for (Task t : {Task::kReading, Task::kRepetition, Task::kMonologue, Task::kDdk})
    if (s == to_string(t)) return t;
  throw ConfigError("unknown task '" + std::string(s) +
                    "' (expected reading, repetition, monologue or ddk)");
}

std::string ManifestRecord::utterance_id() const {
  if (id) return *id;
  return subject_id + "_" + session_id + "_" + std::string(to_string(task));
}

nlohmann::json to_json(const ManifestRecord &r) {
  nlohmann::json j = {{"subject_id", r.subject_id},
                      {"sex", std::string(to_string(r.sex))},
                      {"task", std::string(to_string(r.task))},
                      {"session_id", r.session_id},
                      {"path", r.path},
                      {"channel", std::string(to_string(r.channel))}};
  if (r.group) j["group"] = std::string(to_string(*r.group));
  if (r.noise_path) j["noise_path"] = *r.noise_path;
  if (r.id) j["id"] = *r.id;
  if (!r.provenance.empty()) j["provenance"] = r.provenance;
  return j;
}

ManifestRecord record_from_json(const nlohmann::json &j) {
  ManifestRecord r;
  try {
    r.subject_id = j.at("subject_id").get<std::string>();
    if (j.contains("group") && !j["group"].is_null())
      r.group = parse_class_label(j["group"].get<std::string>());
    r.sex = parse_sex(j.at("sex").get<std::string>());
    r.task = parse_task(j.at("task").get<std::string>());
    r.session_id = j.at("session_id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.channel = parse_channel(j.at("channel").get<std::string>());
    if (j.contains("noise_path")) r.noise_path = j["noise_path"].get<std::string>();
    if (j.contains("id")) r.id = j["id"].get<std::string>();
    if (j.contains("provenance")) r.provenance = j["provenance"];
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("manifest record: ") + e.what());
  } catch (const ConfigError &e) {
    throw DataError(std::string("manifest record: ") + e.what());
  }
  if (r.subject_id.empty()) throw DataError("manifest record: empty subject_id");
  return r;
}

std::filesystem::path Manifest::resolve(const std::string &path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

std::optional<std::filesystem::path> data_root_from_env() {
  const char *v = std::getenv("VOICEPD_DATA_ROOT");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

Manifest load_manifest(const std::filesystem::path &path,
                       const std::optional<std::filesystem::path> &data_root,
                       bool check_paths) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = data_root ? *data_root : path.parent_path();
  if (m.base_dir.empty()) m.base_dir = ".";
  std::string line;
  int line_no = 0;
  std::map<std::string, std::pair<std::optional<ClassLabel>, Sex>> subjects;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " +
                      e.what());
    }
    ManifestRecord r;
    try {
      r = record_from_json(j);
    } catch (const DataError &e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " +
                      e.what());
    }
    auto [it, fresh] = subjects.emplace(r.subject_id, std::pair{r.group, r.sex});
    if (!fresh && (it->second.first != r.group || it->second.second != r.sex))
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": group or sex of subject '" + r.subject_id +
                      "' differs from an earlier record");
    if (!ids.insert(r.utterance_id()).second)
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": duplicate utterance '" + r.utterance_id() + "'");
    if (check_paths) {
      if (!std::filesystem::exists(m.resolve(r.path)))
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": audio file not found: " + m.resolve(r.path).string());
      if (r.noise_path && !std::filesystem::exists(m.resolve(*r.noise_path)))
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": noise file not found: " +
                        m.resolve(*r.noise_path).string());
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const std::vector<ManifestRecord> &records,
                    const std::filesystem::path &path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto &r : records) out << to_json(r).dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::string manifest_digest(const std::vector<ManifestRecord> &records) {
  std::string all;
  for (const auto &r : records) all += to_json(r).dump() + "\n";
  return hex64(fnv1a64(all));
}

std::string hex64(uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = kDigits[v & 0xf];
  return s;
}

std::string file_stem(std::string_view utterance_id) {
  std::string s;
  for (char c : utterance_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    s.push_back(ok ? c : '_');
  }
  // Distinct ids that sanitize alike stay distinct.
  if (s != utterance_id) s += "-" + hex64(fnv1a64(utterance_id)).substr(0, 8);
  return s;
}

}  // namespace voicepd
