// voicepd/manifest.h

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

#ifndef VOICEPD_MANIFEST_H_
#define VOICEPD_MANIFEST_H_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voicepd/common.h"

namespace voicepd {

enum class Channel { kHighQuality, kTelephone };
enum class Task { kReading, kRepetition, kMonologue, kDdk };

std::string_view to_string(Channel c);
std::string_view to_string(Task t);
Channel parse_channel(std::string_view s);
Task parse_task(std::string_view s);

/// One recording. Background-corpus records (used to train the embedder)
/// carry no group.
struct ManifestRecord {
  std::string subject_id;
  std::optional<ClassLabel> group;
  Sex sex = Sex::kMale;
  Task task = Task::kReading;
  std::string session_id;
  std::string path;
  Channel channel = Channel::kHighQuality;
  /// Recording of the room noise alone, used for spectral subtraction.
  std::optional<std::string> noise_path;
  /// Explicit id; by default subject_session_task.
  std::optional<std::string> id;
  /// Augmentation details ({source, kind, snr_db, seed}); empty for
  /// original recordings.
  nlohmann::json provenance = nlohmann::json::object();

  std::string utterance_id() const;
  bool is_augmented() const { return !provenance.empty(); }
};

nlohmann::json to_json(const ManifestRecord &r);
/// Throws DataError on missing or malformed fields.
ManifestRecord record_from_json(const nlohmann::json &j);

struct Manifest {
  std::vector<ManifestRecord> records;
  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string &path) const;
};

/// Data root from VOICEPD_DATA_ROOT, if set.
std::optional<std::filesystem::path> data_root_from_env();

/// Reads a JSON-lines manifest. Relative audio paths resolve against
/// `data_root` when given, else against the manifest's directory. Checks
/// that group and sex are constant per subject, that utterance ids are
/// unique and (when `check_paths`) that every file exists.
Manifest load_manifest(const std::filesystem::path &path,
                       const std::optional<std::filesystem::path> &data_root,
                       bool check_paths = true);

void write_manifest(const std::vector<ManifestRecord> &records,
                    const std::filesystem::path &path);

/// Hash of the canonical record list (hex).
std::string manifest_digest(const std::vector<ManifestRecord> &records);

/// Lower-case hex of a 64-bit value, zero-padded to 16 digits.
std::string hex64(uint64_t v);

/// Utterance id made safe for use as a file name.
std::string file_stem(std::string_view utterance_id);

}  // namespace voicepd

#endif  // VOICEPD_MANIFEST_H_
