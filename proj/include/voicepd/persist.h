// voicepd/persist.h

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

#ifndef VOICEPD_PERSIST_H_
#define VOICEPD_PERSIST_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voicepd/backend.h"
#include "voicepd/gmm.h"
#include "voicepd/tdnn.h"

namespace voicepd {

// Model container:
//   "VPDTNSR1"
//   u64 header length, UTF-8 JSON header
//     {kind, schema_version, config_fingerprint, seed, tensors: [{name, shape}],
//      meta}
//   u32 tensor count, then per tensor
//     u32 name length, name, u32 rank, u64 dims[rank], float32 data
// All integers and floats are little-endian.

inline constexpr int kSchemaVersion = 1;

struct Tensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;  // row-major

  int64_t size() const;
};

struct Artifact {
  std::string kind;
  int schema_version = kSchemaVersion;
  std::string config_fingerprint;
  uint64_t seed = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<Tensor> tensors;

  /// Throws DataError if absent.
  const Tensor &tensor(std::string_view name) const;
  bool has_tensor(std::string_view name) const;
};

Tensor to_tensor(std::string name, const Eigen::MatrixXd &m);
Tensor to_tensor(std::string name, const Eigen::VectorXd &v);
/// Throws DataError unless the tensor has the given shape.
Eigen::MatrixXd to_matrix(const Tensor &t, int64_t rows, int64_t cols);
Eigen::VectorXd to_vector(const Tensor &t, int64_t n);

std::string serialize_artifact(const Artifact &a);
/// Throws DataError on truncation or inconsistent shapes, ConfigError on an
/// unsupported schema version.
Artifact parse_artifact(std::string_view bytes);

void write_artifact(const Artifact &a, const std::filesystem::path &path);
Artifact read_artifact(const std::filesystem::path &path);

struct ArtifactInfo {
  std::string config_fingerprint;
  uint64_t seed = 0;
};

Artifact gmm_to_artifact(const GmmModel &m, const ArtifactInfo &info);
GmmModel gmm_from_artifact(const Artifact &a);

Artifact tdnn_to_artifact(const TdnnWeights &w, const ArtifactInfo &info);
TdnnWeights tdnn_from_artifact(const Artifact &a);

Artifact backend_to_artifact(const Backend &b, const ArtifactInfo &info);
Backend backend_from_artifact(const Artifact &a);

void save_gmm(const GmmModel &m, const ArtifactInfo &info,
              const std::filesystem::path &path);
GmmModel load_gmm(const std::filesystem::path &path);
void save_tdnn(const TdnnWeights &w, const ArtifactInfo &info,
               const std::filesystem::path &path);
TdnnWeights load_tdnn(const std::filesystem::path &path);
void save_backend(const Backend &b, const ArtifactInfo &info,
                  const std::filesystem::path &path);
Backend load_backend(const std::filesystem::path &path);

nlohmann::json tdnn_config_to_json(const TdnnConfig &cfg);
TdnnConfig tdnn_config_from_json(const nlohmann::json &j);

}  // namespace voicepd

#endif  // VOICEPD_PERSIST_H_
