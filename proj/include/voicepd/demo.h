// voicepd/demo.h

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

#ifndef VOICEPD_DEMO_H_
#define VOICEPD_DEMO_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "voicepd/audio.h"
#include "voicepd/common.h"
#include "voicepd/manifest.h"

namespace voicepd {

// Synthetic corpus for demonstrations and end-to-end tests. Each speaker is
// a source-filter voice (glottal pulse train plus aspiration noise through
// formant resonators); the two groups draw their voice parameters from two
// different Gaussians.

struct VoiceParams {
  double f0_hz = 120.0;
  double formant_scale = 1.0;
  double breathiness = 0.1;  // aspiration noise relative to the pulses
  double jitter = 0.005;     // relative period perturbation
  double tilt = 0.9;         // glottal low-pass pole
  double articulation = 1.0; // vowel formants relative to the vowel centre
};

/// Draws a voice; an unset group mixes both groups' distributions.
VoiceParams draw_voice(std::optional<ClassLabel> group, Sex sex, uint64_t seed);

/// Vowel sequence separated by pauses, with leading and trailing silence.
AudioBuffer render_speech(const VoiceParams &v, double seconds, int rate_hz,
                          uint64_t seed);

/// Stationary low-level room noise.
AudioBuffer render_room_noise(double seconds, int rate_hz, double level_rms,
                              uint64_t seed);

struct DemoOptions {
  int n_pd = 60;
  int n_hc = 60;
  /// Unset generates both sexes, alternating.
  std::optional<Sex> sex = Sex::kMale;
  Channel channel = Channel::kHighQuality;
  double utterance_s = 5.0;
  int n_background = 24;
  int background_utterances = 4;
  uint64_t seed = 0;
};

struct DemoLayout {
  std::filesystem::path manifest;             // cohort
  std::filesystem::path background_manifest;  // embedder training speakers
  std::filesystem::path rir_dir, noise_dir, music_dir, babble_dir;
};

DemoLayout demo_layout(const std::filesystem::path &out_dir);

/// Writes the audio, both manifests and the four corruption pools under
/// `out_dir`. Output is a pure function of the options.
DemoLayout generate_demo(const std::filesystem::path &out_dir,
                         const DemoOptions &opts);

}  // namespace voicepd

#endif  // VOICEPD_DEMO_H_
