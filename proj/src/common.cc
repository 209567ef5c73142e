// src/common.cc

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

#include "voicepd/common.h"

namespace voicepd {

std::string_view to_string(ClassLabel label) {
  return label == ClassLabel::kPD ? "PD" : "HC";
}

std::string_view to_string(Sex sex) { return sex == Sex::kMale ? "M" : "F"; }

ClassLabel parse_class_label(std::string_view s) {
  if (s == "PD") return ClassLabel::kPD;
  if (s == "HC") return ClassLabel::kHC;
  throw DataError("unknown group label '" + std::string(s) +
                  "' (expected PD or HC)");
}

Sex parse_sex(std::string_view s) {
  if (s == "M") return Sex::kMale;
  if (s == "F") return Sex::kFemale;
  throw DataError("unknown sex '" + std::string(s) + "' (expected M or F)");
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace voicepd
