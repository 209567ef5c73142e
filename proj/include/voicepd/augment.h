// voicepd/augment.h

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

#ifndef VOICEPD_AUGMENT_H_
#define VOICEPD_AUGMENT_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "voicepd/audio.h"

namespace voicepd {

enum class CorruptionKind { kReverb = 0, kNoise = 1, kMusic = 2, kBabble = 3 };

inline constexpr std::array<CorruptionKind, 4> kAllCorruptionKinds = {
    CorruptionKind::kReverb, CorruptionKind::kNoise, CorruptionKind::kMusic,
    CorruptionKind::kBabble};

std::string_view to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(std::string_view s);

struct SnrRange {
  double low_db;
  double high_db;
};

/// SNR range used when a spec gives no fixed value: noise 0-15 dB,
/// music 5-15 dB, babble 13-20 dB.
SnrRange default_snr_range(CorruptionKind kind);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kNoise;
  /// Fixed SNR; when unset the SNR is drawn per utterance from `snr_range`.
  std::optional<double> snr_db;
  std::optional<SnrRange> snr_range;
  std::vector<std::string> source_pool;  // audio file paths
  uint64_t seed = 0;

  SnrRange effective_range() const;
  void validate() const;
};

/// A spec together with its loaded interference audio.
struct CorruptionSource {
  CorruptionSpec spec;
  std::vector<AudioBuffer> pool;
};

/// Loads every file of spec.source_pool, resampled to `sample_rate_hz`.
CorruptionSource load_corruption_source(const CorruptionSpec &spec,
                                        int sample_rate_hz);

/// Full convolution with the impulse response, truncated to the input length
/// and rescaled to the input's peak amplitude.
AudioBuffer convolve_rir(const AudioBuffer &buf, const AudioBuffer &rir);

/// Mean square over the active (non-silent) 20 ms frames of `buf`.
double active_power(const AudioBuffer &buf);

struct MixOptions {
  /// When > 0, the interference track is assembled from fresh excerpts
  /// starting every `refresh_s` seconds at random offsets.
  double refresh_s = 0.0;
  uint64_t seed = 0;
};

/// Adds interference scaled to the requested SNR (powers measured over the
/// active region of `buf`). snr_db = +infinity returns the input unchanged.
AudioBuffer mix_additive(const AudioBuffer &buf,
                         const AudioBuffer &interference, double snr_db,
                         const MixOptions &opts = {});

/// Sums `n_speakers` distinct pool entries, each normalized to unit power.
AudioBuffer make_babble(const std::vector<AudioBuffer> &pool, int n_speakers,
                        uint64_t seed);

/// Rescales to peak 0.99 if any sample would clip.
void clamp_peak(AudioBuffer &buf);

struct Utterance {
  std::string id;
  AudioBuffer audio;
};

struct AugmentedUtterance {
  std::string id;
  std::string source_id;
  /// Unset for the original (clean) copy.
  std::optional<CorruptionKind> kind;
  double snr_db = 0.0;  // NaN for reverb
  uint64_t seed = 0;
  AudioBuffer audio;
};

/// Applies one corruption to one utterance with a deterministic seed.
AugmentedUtterance corrupt(const Utterance &utt, const CorruptionSource &src,
                           uint64_t seed);

/// For each utterance keeps the original plus 2 of the 4 corrupted copies,
/// chosen at random; the output is three times the input size.
std::vector<AugmentedUtterance> augment_corpus(
    const std::vector<Utterance> &utterances,
    const std::array<CorruptionSource, 4> &sources, uint64_t seed);

/// Which two corruption kinds augment_corpus keeps for utterance `utt_id`.
std::array<CorruptionKind, 2> kept_kinds(uint64_t seed,
                                         std::string_view utt_id);

}  // namespace voicepd

#endif  // VOICEPD_AUGMENT_H_
