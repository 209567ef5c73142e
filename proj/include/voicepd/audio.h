// voicepd/audio.h

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

#ifndef VOICEPD_AUDIO_H_
#define VOICEPD_AUDIO_H_

#include <complex>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace voicepd {

/// Mono waveform, amplitudes nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = 0;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
  /// Throws DataError if empty, non-finite, or the rate is not positive.
  void validate() const;
};

/// Reads a RIFF/WAVE file with 16- or 24-bit integer PCM. Multi-channel files
/// are rejected unless `channel` selects one of them.
AudioBuffer load_wav(const std::filesystem::path &path,
                     std::optional<int> channel = std::nullopt);

/// Writes mono integer PCM (16 or 24 bits); samples are clamped to [-1, 1).
void save_wav(const std::filesystem::path &path, const AudioBuffer &buf,
              int bits_per_sample = 16);

/// Band-limited sample-rate conversion by Kaiser-windowed sinc interpolation.
/// The anti-aliasing cutoff sits at 90% of the lower Nyquist frequency.
AudioBuffer resample(const AudioBuffer &buf, int target_hz);

/// Root mean square of a sample span (0 for an empty span).
double rms(std::span<const double> x);

/// Mean square of a sample span.
double power(std::span<const double> x);

/// Real-to-complex FFT of fixed size backed by FFTW. Not thread-safe per
/// instance; plan creation is serialized internally.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;
  RealFft(RealFft &&other) noexcept;
  RealFft &operator=(RealFft &&other) noexcept;

  int size() const { return n_; }
  int num_bins() const { return n_ / 2 + 1; }

  /// `in` may be shorter than size(); it is zero-padded.
  void forward(std::span<const double> in,
               std::span<std::complex<double>> out);
  /// Normalized inverse: inverse(forward(x)) == x.
  void inverse(std::span<const std::complex<double>> in,
               std::span<double> out);

 private:
  void release();

  int n_ = 0;
  double *real_ = nullptr;
  void *complex_ = nullptr;
  void *plan_fwd_ = nullptr;
  void *plan_inv_ = nullptr;
};

/// Smallest power of two >= n.
int next_pow2(int n);

}  // namespace voicepd

#endif  // VOICEPD_AUDIO_H_
