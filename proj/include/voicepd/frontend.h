// voicepd/frontend.h

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

#ifndef VOICEPD_FRONTEND_H_
#define VOICEPD_FRONTEND_H_

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voicepd/audio.h"

namespace voicepd {

enum class FrontendPreset {
  kGmmHighQuality,
  kGmmTelephone,
  kXvecTelephone,
  kXvecHighQuality,
};

std::string_view to_string(FrontendPreset preset);
FrontendPreset parse_frontend_preset(std::string_view s);

struct FrontendConfig {
  double frame_len_ms = 20.0;
  double frame_hop_ms = 10.0;
  int n_mfcc = 19;
  int n_mel_bins = 23;
  double mel_low_hz = 20.0;
  double mel_high_hz = 7000.0;
  /// 0 = static features only, 1 = + deltas, 2 = + delta-deltas.
  int delta_order = 2;
  double cms_window_ms = 300.0;
  /// Added to the utterance-mean log-energy to form the VAD threshold;
  /// -infinity disables VAD.
  double vad_offset = 0.0;
  double preemph_coeff = 0.97;
  /// Deltas are computed over the full utterance and silent frames dropped
  /// afterwards; false drops first.
  bool deltas_before_vad = true;
  /// Rate the input is converted to before analysis; unset keeps the native
  /// rate.
  std::optional<int> target_rate_hz;

  static FrontendConfig preset(FrontendPreset preset);

  /// Static dimension: log-energy + n_mfcc.
  int base_dim() const { return 1 + n_mfcc; }
  int feature_dim() const { return base_dim() * (1 + delta_order); }
  /// Throws ConfigError if inconsistent for audio at `sample_rate_hz`.
  void validate(int sample_rate_hz) const;
};

/// Per-frame features: column 0 is log-energy, then c_1..c_n, then deltas.
struct FeatureMatrix {
  Eigen::MatrixXd frames;  // T x D
  double frame_hop_ms = 10.0;
  /// One flag per row of `frames`; empty until VAD has run.
  std::vector<bool> vad_mask;
  std::string utterance_id;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
  double duration_s() const { return num_frames() * frame_hop_ms / 1000.0; }
};

/// Number of frames produced by non-padded framing.
int num_frames(int64_t num_samples, int frame_len, int frame_hop);

/// Precomputed mel filterbank, window and DCT for one config and sample rate.
class MfccComputer {
 public:
  MfccComputer(const FrontendConfig &cfg, int sample_rate_hz);

  int frame_length() const { return frame_len_; }
  int frame_shift() const { return frame_hop_; }
  int fft_size() const { return fft_.size(); }

  /// Log mel energies of one raw frame (length frame_length()).
  Eigen::VectorXd log_mel(std::span<const double> frame);
  /// Log energy of the raw, unprocessed frame.
  double log_energy(std::span<const double> frame) const;
  /// Cepstra c_1..c_n of a log-mel vector.
  Eigen::VectorXd cepstra(const Eigen::VectorXd &log_mel) const;
  /// Rows 1..n_mfcc of the orthonormal DCT-II over n_mel_bins inputs.
  const Eigen::MatrixXd &dct() const { return dct_; }

  /// Static features (log-energy + cepstra), one row per frame.
  FeatureMatrix compute(const AudioBuffer &buf);

 private:
  FrontendConfig cfg_;
  int sample_rate_;
  int frame_len_;
  int frame_hop_;
  RealFft fft_;
  std::vector<double> window_;
  // Triangular filters stored sparsely: first FFT bin and weights.
  std::vector<int> mel_first_bin_;
  std::vector<std::vector<double>> mel_weights_;
  Eigen::MatrixXd dct_;
  std::vector<double> scratch_;
  std::vector<std::complex<double>> spectrum_;
};

/// Orthonormal DCT-II basis, n x n (row k = frequency k).
Eigen::MatrixXd dct_ii_matrix(int n);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct SpectralSubtractionConfig {
  double alpha = 1.0;   // over-subtraction factor
  double beta = 0.02;   // spectral floor relative to |X|
  double frame_ms = 20.0;
  double hop_ms = 10.0;
  double min_noise_s = 0.5;
};

/// Magnitude spectral subtraction with the noisy phase and overlap-add
/// resynthesis. Output length equals input length.
AudioBuffer spectral_subtract(const AudioBuffer &buf,
                              const AudioBuffer &noise_sample,
                              const SpectralSubtractionConfig &cfg = {});

/// Pre-emphasis, Hamming window, power spectrum, mel filterbank, log, DCT.
/// Resamples first when cfg.target_rate_hz is set.
FeatureMatrix compute_features(const AudioBuffer &buf,
                               const FrontendConfig &cfg);

/// Appends regression deltas (window +-2, edge replication) of the static
/// block. order 1 doubles the dimension, order 2 triples it.
FeatureMatrix append_deltas(const FeatureMatrix &fm, int order);

/// Marks frames whose log-energy (column 0) exceeds mean + offset, then
/// applies 5-frame majority smoothing. Throws DataError if nothing is voiced.
FeatureMatrix vad_mask(const FeatureMatrix &fm, double offset);

/// Keeps only rows flagged by the VAD mask.
FeatureMatrix drop_unvoiced(const FeatureMatrix &fm);

/// Sliding-window mean subtraction on every column except log-energy. The
/// window is centred and shifted inward near the edges; utterances shorter
/// than the window get global mean subtraction.
FeatureMatrix apply_cms(const FeatureMatrix &fm, double window_ms);

struct ChunkOptions {
  double min_s = 1.0;
  double max_s = 5.0;
  /// Segments shorter than this are discarded.
  int min_frames = 15;
  /// Segments longer than this are split into near-equal fragments.
  double max_fragment_s = 100.0;
  uint64_t seed = 0;
};

/// Splits voiced frames into segments of uniform-random duration in
/// [min_s, max_s]. A trailing remainder shorter than min_s is merged into
/// the previous segment. max_s may be +infinity (whole-utterance mode).
std::vector<FeatureMatrix> chunk_segments(const FeatureMatrix &fm,
                                          const ChunkOptions &opts);

/// Full per-utterance front end: optional spectral subtraction, features,
/// deltas, VAD, silent-frame removal and CMS.
FeatureMatrix run_frontend(const AudioBuffer &buf, const FrontendConfig &cfg,
                           const AudioBuffer *noise_sample = nullptr,
                           const SpectralSubtractionConfig &ss_cfg = {});

}  // namespace voicepd

#endif  // VOICEPD_FRONTEND_H_
