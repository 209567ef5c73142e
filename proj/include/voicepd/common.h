// voicepd/common.h

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

#ifndef VOICEPD_COMMON_H_
#define VOICEPD_COMMON_H_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace voicepd {

/// Error categories; the numeric value is the CLI exit code.
enum class ErrorKind : int { kData = 1, kConfig = 2, kNumerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// Bad or missing input data (files, manifests, degenerate signals).
class DataError : public Error {
 public:
  explicit DataError(const std::string &what) : Error(ErrorKind::kData, what) {}
};

/// Invalid configuration or violated precondition on parameters.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &what)
      : Error(ErrorKind::kConfig, what) {}
};

/// Non-finite values or divergence inside an estimator.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string &what)
      : Error(ErrorKind::kNumerical, what) {}
};

enum class ClassLabel { kHC = 0, kPD = 1 };
enum class Sex { kMale, kFemale };

std::string_view to_string(ClassLabel label);
std::string_view to_string(Sex sex);
ClassLabel parse_class_label(std::string_view s);
Sex parse_sex(std::string_view s);

/// splitmix64 finalizer; used to derive schedule-independent sub-seeds.
constexpr uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a over bytes.
uint64_t fnv1a64(std::string_view bytes);

/// Seed for item `key` under `global_seed`, e.g. hash(global_seed, run_index).
inline uint64_t derive_seed(uint64_t global_seed, uint64_t key) {
  return mix_seed(mix_seed(global_seed) ^ key);
}
inline uint64_t derive_seed(uint64_t global_seed, std::string_view key) {
  return derive_seed(global_seed, fnv1a64(key));
}

/// Logistic function with sigmoid(-x) == 1 - sigmoid(x) bit-exactly.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  return 1.0 - 1.0 / (1.0 + std::exp(x));
}

}  // namespace voicepd

#endif  // VOICEPD_COMMON_H_
