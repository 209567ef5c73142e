// src/frontend.cc

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

#include "voicepd/frontend.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "voicepd/common.h"

namespace voicepd {

namespace {

// Floor applied to energies before taking logs.
constexpr double kEnergyFloor = 1.1920928955078125e-07;

int ms_to_samples(double ms, int rate) {
  return static_cast<int>(std::lround(ms * 1e-3 * rate));
}

}  // namespace

std::string_view to_string(FrontendPreset preset) {
  switch (preset) {
    case FrontendPreset::kGmmHighQuality: return "gmm-highquality";
    case FrontendPreset::kGmmTelephone: return "gmm-telephone";
    case FrontendPreset::kXvecTelephone: return "xvec-telephone";
    case FrontendPreset::kXvecHighQuality: return "xvec-highquality";
  }
  return "unknown";
}

FrontendPreset parse_frontend_preset(std::string_view s) {
  for (auto p : {FrontendPreset::kGmmHighQuality, FrontendPreset::kGmmTelephone,
                 FrontendPreset::kXvecTelephone,
                 FrontendPreset::kXvecHighQuality})
    if (to_string(p) == s) return p;
  throw ConfigError("unknown frontend preset '" + std::string(s) + "'");
}

FrontendConfig FrontendConfig::preset(FrontendPreset preset) {
  FrontendConfig c;
  switch (preset) {
    case FrontendPreset::kGmmHighQuality:
      c.n_mfcc = 19;
      c.n_mel_bins = 23;
      c.mel_low_hz = 20.0;
      c.mel_high_hz = 7000.0;
      c.delta_order = 2;
      break;
    case FrontendPreset::kGmmTelephone:
      c.n_mfcc = 19;
      c.n_mel_bins = 23;
      c.mel_low_hz = 300.0;
      c.mel_high_hz = 3700.0;
      c.delta_order = 2;
      break;
    case FrontendPreset::kXvecTelephone:
      // c_1..c_23 need at least 24 filterbank channels.
      c.n_mfcc = 23;
      c.n_mel_bins = 24;
      c.mel_low_hz = 20.0;
      c.mel_high_hz = 3700.0;
      c.delta_order = 0;
      c.target_rate_hz = 8000;
      break;
    case FrontendPreset::kXvecHighQuality:
      c.n_mfcc = 30;
      c.n_mel_bins = 31;
      c.mel_low_hz = 20.0;
      c.mel_high_hz = 7600.0;
      c.delta_order = 0;
      c.target_rate_hz = 16000;
      break;
  }
  return c;
}

void FrontendConfig::validate(int sample_rate_hz) const {
  if (frame_len_ms <= 0 || frame_hop_ms <= 0)
    throw ConfigError("frame length and hop must be positive");
  if (n_mfcc < 1 || n_mel_bins < 2)
    throw ConfigError("need n_mfcc >= 1 and n_mel_bins >= 2");
  if (n_mfcc > n_mel_bins - 1)
    throw ConfigError("n_mfcc must be < n_mel_bins (c_0 is replaced by "
                      "log-energy)");
  if (!(mel_low_hz >= 0 && mel_low_hz < mel_high_hz))
    throw ConfigError("mel_low_hz must be below mel_high_hz");
  if (mel_high_hz > 0.5 * sample_rate_hz + 1e-9)
    throw ConfigError("mel_high_hz exceeds the Nyquist frequency");
  if (delta_order < 0 || delta_order > 2)
    throw ConfigError("delta_order must be 0, 1 or 2");
  if (cms_window_ms < 0) throw ConfigError("cms window must be >= 0");
  if (target_rate_hz && *target_rate_hz < 4000)
    throw ConfigError("target rate must be >= 4000 Hz");
}

int num_frames(int64_t num_samples, int frame_len, int frame_hop) {
  if (num_samples < frame_len) return 0;
  return static_cast<int>(1 + (num_samples - frame_len) / frame_hop);
}

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

Eigen::MatrixXd dct_ii_matrix(int n) {
  Eigen::MatrixXd m(n, n);
  for (int k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
      m(k, i) = scale * std::cos(std::numbers::pi * k * (i + 0.5) / n);
  }
  return m;
}

MfccComputer::MfccComputer(const FrontendConfig &cfg, int sample_rate_hz)
    : cfg_(cfg),
      sample_rate_(sample_rate_hz),
      frame_len_(ms_to_samples(cfg.frame_len_ms, sample_rate_hz)),
      frame_hop_(ms_to_samples(cfg.frame_hop_ms, sample_rate_hz)),
      fft_(next_pow2(std::max(2, frame_len_))) {
  cfg_.validate(sample_rate_hz);
  if (frame_len_ < 2 || frame_hop_ < 1)
    throw ConfigError("frame too short for the sample rate");

  window_.resize(frame_len_);
  for (int i = 0; i < frame_len_; ++i)
    window_[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i /
                                        (frame_len_ - 1));

  const int n_bins = fft_.num_bins();
  const double mel_lo = hz_to_mel(cfg_.mel_low_hz);
  const double mel_hi = hz_to_mel(cfg_.mel_high_hz);
  const double delta = (mel_hi - mel_lo) / (cfg_.n_mel_bins + 1);
  mel_first_bin_.assign(cfg_.n_mel_bins, 0);
  mel_weights_.assign(cfg_.n_mel_bins, {});
  for (int m = 0; m < cfg_.n_mel_bins; ++m) {
    const double left = mel_lo + m * delta;
    const double center = left + delta;
    const double right = center + delta;
    int first = -1;
    std::vector<double> w;
    for (int k = 0; k < n_bins; ++k) {
      const double mel =
          hz_to_mel(static_cast<double>(k) * sample_rate_ / fft_.size());
      double weight = 0.0;
      if (mel > left && mel <= center)
        weight = (mel - left) / (center - left);
      else if (mel > center && mel < right)
        weight = (right - mel) / (right - center);
      if (weight > 0.0) {
        if (first < 0) first = k;
        w.resize(k - first + 1, 0.0);
        w[k - first] = weight;
      }
    }
    mel_first_bin_[m] = std::max(first, 0);
    mel_weights_[m] = std::move(w);
  }

  const Eigen::MatrixXd full = dct_ii_matrix(cfg_.n_mel_bins);
  dct_ = full.middleRows(1, cfg_.n_mfcc);
  scratch_.resize(frame_len_);
  spectrum_.resize(n_bins);
}

double MfccComputer::log_energy(std::span<const double> frame) const {
  double e = 0.0;
  for (double v : frame) e += v * v;
  return std::log(std::max(e, kEnergyFloor));
}

Eigen::VectorXd MfccComputer::log_mel(std::span<const double> frame) {
  if (static_cast<int>(frame.size()) != frame_len_)
    throw ConfigError("log_mel: frame length mismatch");
  double mean = 0.0;
  for (double v : frame) mean += v;
  mean /= frame_len_;
  for (int i = 0; i < frame_len_; ++i) scratch_[i] = frame[i] - mean;
  for (int i = frame_len_ - 1; i > 0; --i)
    scratch_[i] -= cfg_.preemph_coeff * scratch_[i - 1];
  scratch_[0] -= cfg_.preemph_coeff * scratch_[0];
  for (int i = 0; i < frame_len_; ++i) scratch_[i] *= window_[i];
  fft_.forward(scratch_, spectrum_);

  Eigen::VectorXd out(cfg_.n_mel_bins);
  for (int m = 0; m < cfg_.n_mel_bins; ++m) {
    double e = 0.0;
    const auto &w = mel_weights_[m];
    for (std::size_t j = 0; j < w.size(); ++j)
      e += w[j] * std::norm(spectrum_[mel_first_bin_[m] + j]);
    out[m] = std::log(std::max(e, kEnergyFloor));
  }
  return out;
}

Eigen::VectorXd MfccComputer::cepstra(const Eigen::VectorXd &log_mel) const {
  return dct_ * log_mel;
}

FeatureMatrix MfccComputer::compute(const AudioBuffer &buf) {
  if (buf.sample_rate_hz != sample_rate_)
    throw ConfigError("MfccComputer: sample rate mismatch");
  const int t_count =
      num_frames(static_cast<int64_t>(buf.size()), frame_len_, frame_hop_);
  if (t_count < 1) throw DataError("audio shorter than one frame");
  FeatureMatrix fm;
  fm.frame_hop_ms = cfg_.frame_hop_ms;
  fm.frames.resize(t_count, cfg_.base_dim());
  for (int t = 0; t < t_count; ++t) {
    std::span<const double> frame(buf.samples.data() + t * frame_hop_,
                                  frame_len_);
    fm.frames(t, 0) = log_energy(frame);
    fm.frames.row(t).tail(cfg_.n_mfcc) = cepstra(log_mel(frame)).transpose();
  }
  return fm;
}

FeatureMatrix compute_features(const AudioBuffer &buf,
                               const FrontendConfig &cfg) {
  buf.validate();
  if (cfg.target_rate_hz && *cfg.target_rate_hz != buf.sample_rate_hz) {
    MfccComputer mfcc(cfg, *cfg.target_rate_hz);
    return mfcc.compute(resample(buf, *cfg.target_rate_hz));
  }
  MfccComputer mfcc(cfg, buf.sample_rate_hz);
  return mfcc.compute(buf);
}

// ---------------------------------------------------------------------------

AudioBuffer spectral_subtract(const AudioBuffer &buf,
                              const AudioBuffer &noise_sample,
                              const SpectralSubtractionConfig &cfg) {
  buf.validate();
  noise_sample.validate();
  if (buf.sample_rate_hz != noise_sample.sample_rate_hz)
    throw DataError("spectral_subtract: sample-rate mismatch");
  if (noise_sample.duration_s() < cfg.min_noise_s)
    throw DataError("spectral_subtract: noise sample too short");
  const int rate = buf.sample_rate_hz;
  const int len = ms_to_samples(cfg.frame_ms, rate);
  const int hop = ms_to_samples(cfg.hop_ms, rate);
  if (len < 2 || hop < 1 || hop > len)
    throw ConfigError("spectral_subtract: bad framing");

  // Periodic Hann: at 50% overlap the shifted windows sum to one.
  std::vector<double> window(len);
  for (int i = 0; i < len; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / len);

  RealFft fft(next_pow2(len));
  const int n_bins = fft.num_bins();
  std::vector<double> frame(len);
  std::vector<std::complex<double>> spec(n_bins);

  std::vector<double> noise_mag(n_bins, 0.0);
  const int n_noise =
      num_frames(static_cast<int64_t>(noise_sample.size()), len, hop);
  for (int t = 0; t < n_noise; ++t) {
    for (int i = 0; i < len; ++i)
      frame[i] = noise_sample.samples[t * hop + i] * window[i];
    fft.forward(frame, spec);
    for (int k = 0; k < n_bins; ++k) noise_mag[k] += std::abs(spec[k]);
  }
  for (double &m : noise_mag) m /= n_noise;

  // Pad by one frame on each side so every input sample is covered by
  // complete window overlap.
  const int64_t n = static_cast<int64_t>(buf.size());
  const int64_t padded_len = n + 2 * len;
  std::vector<double> padded(padded_len + len, 0.0);
  std::copy(buf.samples.begin(), buf.samples.end(), padded.begin() + len);
  std::vector<double> acc(padded.size(), 0.0), wsum(padded.size(), 0.0);
  std::vector<double> time(fft.size());
  for (int64_t start = 0; start + len <= static_cast<int64_t>(padded.size());
       start += hop) {
    for (int i = 0; i < len; ++i) frame[i] = padded[start + i] * window[i];
    fft.forward(frame, spec);
    for (int k = 0; k < n_bins; ++k) {
      const double mag = std::abs(spec[k]);
      if (mag <= 0.0) continue;
      const double target =
          std::max(mag - cfg.alpha * noise_mag[k], cfg.beta * mag);
      spec[k] *= target / mag;
    }
    fft.inverse(spec, time);
    for (int i = 0; i < len; ++i) {
      acc[start + i] += time[i];
      wsum[start + i] += window[i];
    }
  }
  AudioBuffer out;
  out.sample_rate_hz = rate;
  out.samples.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    const double w = wsum[len + i];
    out.samples[i] = w > 1e-8 ? acc[len + i] / w : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd regression_deltas(const Eigen::MatrixXd &x) {
  constexpr int kWindow = 2;
  constexpr double kNorm = 10.0;  // 2 * (1^2 + 2^2)
  const int t_count = static_cast<int>(x.rows());
  Eigen::MatrixXd d(x.rows(), x.cols());
  for (int t = 0; t < t_count; ++t) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
    for (int k = 1; k <= kWindow; ++k) {
      const int fwd = std::min(t + k, t_count - 1);
      const int bwd = std::max(t - k, 0);
      acc += k * (x.row(fwd) - x.row(bwd));
    }
    d.row(t) = acc / kNorm;
  }
  return d;
}

}  // namespace

FeatureMatrix append_deltas(const FeatureMatrix &fm, int order) {
  if (order < 0 || order > 2)
    throw ConfigError("append_deltas: order must be 0, 1 or 2");
  FeatureMatrix out = fm;
  if (order == 0 || fm.num_frames() == 0) return out;
  const Eigen::MatrixXd d1 = regression_deltas(fm.frames);
  out.frames.resize(fm.num_frames(), fm.dim() * (1 + order));
  out.frames.leftCols(fm.dim()) = fm.frames;
  out.frames.middleCols(fm.dim(), fm.dim()) = d1;
  if (order == 2)
    out.frames.rightCols(fm.dim()) = regression_deltas(d1);
  return out;
}

FeatureMatrix vad_mask(const FeatureMatrix &fm, double offset) {
  const int t_count = fm.num_frames();
  if (t_count == 0) throw DataError("no voiced frames (empty input)");
  FeatureMatrix out = fm;
  out.vad_mask.assign(t_count, true);
  if (std::isinf(offset) && offset < 0) return out;

  const double mean = fm.frames.col(0).mean();
  const double threshold = mean + offset;
  // Strictly above; the margin keeps equal energies from passing on rounding.
  const double margin = 1e-12 * std::max(1.0, std::abs(threshold));
  std::vector<int> raw(t_count);
  for (int t = 0; t < t_count; ++t)
    raw[t] = fm.frames(t, 0) > threshold + margin ? 1 : 0;

  constexpr int kHalf = 2;
  bool any = false;
  for (int t = 0; t < t_count; ++t) {
    int voiced = 0, total = 0;
    for (int j = std::max(0, t - kHalf); j <= std::min(t_count - 1, t + kHalf);
         ++j) {
      voiced += raw[j];
      ++total;
    }
    out.vad_mask[t] = 2 * voiced > total;
    any = any || out.vad_mask[t];
  }
  if (!any) throw DataError("no voiced frames");
  return out;
}

FeatureMatrix drop_unvoiced(const FeatureMatrix &fm) {
  if (fm.vad_mask.empty()) return fm;
  if (static_cast<int>(fm.vad_mask.size()) != fm.num_frames())
    throw ConfigError("drop_unvoiced: mask length mismatch");
  int kept = 0;
  for (bool v : fm.vad_mask) kept += v ? 1 : 0;
  FeatureMatrix out;
  out.frame_hop_ms = fm.frame_hop_ms;
  out.utterance_id = fm.utterance_id;
  out.frames.resize(kept, fm.dim());
  int r = 0;
  for (int t = 0; t < fm.num_frames(); ++t)
    if (fm.vad_mask[t]) out.frames.row(r++) = fm.frames.row(t);
  out.vad_mask.assign(kept, true);
  return out;
}

FeatureMatrix apply_cms(const FeatureMatrix &fm, double window_ms) {
  FeatureMatrix out = fm;
  const int t_count = fm.num_frames();
  if (t_count == 0 || fm.dim() < 2) return out;
  const int window = std::max(
      1, static_cast<int>(std::lround(window_ms / fm.frame_hop_ms)));
  const int cols = fm.dim() - 1;
  // Prefix sums give each window mean in O(1).
  Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(t_count + 1, cols);
  for (int t = 0; t < t_count; ++t)
    prefix.row(t + 1) = prefix.row(t) + fm.frames.row(t).tail(cols);
  for (int t = 0; t < t_count; ++t) {
    int start = 0, end = t_count;
    if (window < t_count) {
      start = t - window / 2;
      end = start + window;
      if (start < 0) {
        end -= start;
        start = 0;
      }
      if (end > t_count) {
        start -= end - t_count;
        end = t_count;
      }
    }
    const Eigen::RowVectorXd mean =
        (prefix.row(end) - prefix.row(start)) / static_cast<double>(end - start);
    out.frames.row(t).tail(cols) -= mean;
  }
  return out;
}

std::vector<FeatureMatrix> chunk_segments(const FeatureMatrix &fm,
                                          const ChunkOptions &opts) {
  if (!(opts.min_s >= 0.0 && opts.min_s < opts.max_s))
    throw ConfigError("chunk_segments: need 0 <= min_s < max_s");
  const int t_count = fm.num_frames();
  std::vector<FeatureMatrix> out;
  if (t_count == 0) return out;
  const double hop_s = fm.frame_hop_ms / 1000.0;
  const int min_n = std::max(1, static_cast<int>(std::lround(opts.min_s / hop_s)));
  const bool whole = std::isinf(opts.max_s);

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> dur(opts.min_s,
                                             whole ? opts.min_s : opts.max_s);
  std::vector<std::pair<int, int>> spans;
  int pos = 0;
  while (pos < t_count) {
    const int remaining = t_count - pos;
    int n = remaining;
    if (!whole) {
      n = std::max(1, static_cast<int>(std::lround(dur(rng) / hop_s)));
      if (n >= remaining || remaining - n < min_n) n = remaining;
    }
    spans.emplace_back(pos, n);
    pos += n;
  }

  const int max_frag = std::max(
      1, static_cast<int>(std::floor(opts.max_fragment_s / hop_s)));
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto [start, n] = spans[s];
    const int parts = (n + max_frag - 1) / max_frag;
    const std::string base = fm.utterance_id + "/seg" + std::to_string(s);
    for (int p = 0; p < parts; ++p) {
      const int a = start + static_cast<int>(int64_t(n) * p / parts);
      const int b = start + static_cast<int>(int64_t(n) * (p + 1) / parts);
      if (b - a < opts.min_frames) continue;
      FeatureMatrix seg;
      seg.frame_hop_ms = fm.frame_hop_ms;
      seg.frames = fm.frames.middleRows(a, b - a);
      seg.vad_mask.assign(b - a, true);
      seg.utterance_id =
          parts > 1 ? base + "/frag" + std::to_string(p) : base;
      out.push_back(std::move(seg));
    }
  }
  return out;
}

FeatureMatrix run_frontend(const AudioBuffer &buf, const FrontendConfig &cfg,
                           const AudioBuffer *noise_sample,
                           const SpectralSubtractionConfig &ss_cfg) {
  FeatureMatrix fm;
  if (noise_sample != nullptr) {
    AudioBuffer noise = *noise_sample;
    if (noise.sample_rate_hz != buf.sample_rate_hz)
      noise = resample(noise, buf.sample_rate_hz);
    fm = compute_features(spectral_subtract(buf, noise, ss_cfg), cfg);
  } else {
    fm = compute_features(buf, cfg);
  }
  if (cfg.deltas_before_vad) {
    fm = append_deltas(fm, cfg.delta_order);
    fm = drop_unvoiced(vad_mask(fm, cfg.vad_offset));
  } else {
    fm = drop_unvoiced(vad_mask(fm, cfg.vad_offset));
    fm = append_deltas(fm, cfg.delta_order);
  }
  return apply_cms(fm, cfg.cms_window_ms);
}

}  // namespace voicepd
