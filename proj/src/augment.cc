// src/augment.cc

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

#include "voicepd/augment.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "voicepd/common.h"

namespace voicepd {

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kReverb: return "reverb";
    case CorruptionKind::kNoise: return "noise";
    case CorruptionKind::kMusic: return "music";
    case CorruptionKind::kBabble: return "babble";
  }
  return "unknown";
}

CorruptionKind parse_corruption_kind(std::string_view s) {
  for (auto k : kAllCorruptionKinds)
    if (to_string(k) == s) return k;
  throw ConfigError("unknown corruption kind '" + std::string(s) + "'");
}

SnrRange default_snr_range(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kNoise: return {0.0, 15.0};
    case CorruptionKind::kMusic: return {5.0, 15.0};
    case CorruptionKind::kBabble: return {13.0, 20.0};
    case CorruptionKind::kReverb: break;
  }
  return {0.0, 0.0};
}

SnrRange CorruptionSpec::effective_range() const {
  if (snr_db) return {*snr_db, *snr_db};
  if (snr_range) return *snr_range;
  return default_snr_range(kind);
}

void CorruptionSpec::validate() const {
  if (source_pool.empty())
    throw ConfigError("corruption '" + std::string(to_string(kind)) +
                      "' has an empty source pool");
  if (kind == CorruptionKind::kReverb) return;
  const SnrRange r = effective_range();
  if (!std::isfinite(r.low_db) || !std::isfinite(r.high_db) ||
      r.low_db > r.high_db)
    throw ConfigError("corruption SNR must be finite with low <= high");
}

CorruptionSource load_corruption_source(const CorruptionSpec &spec,
                                        int sample_rate_hz) {
  spec.validate();
  CorruptionSource src{spec, {}};
  for (const auto &path : spec.source_pool) {
    AudioBuffer a = load_wav(path);
    if (a.sample_rate_hz != sample_rate_hz) a = resample(a, sample_rate_hz);
    src.pool.push_back(std::move(a));
  }
  if (spec.kind == CorruptionKind::kBabble && src.pool.size() < 3)
    throw ConfigError("babble pool needs at least 3 recordings");
  return src;
}

void clamp_peak(AudioBuffer &buf) {
  double peak = 0.0;
  for (double v : buf.samples) peak = std::max(peak, std::abs(v));
  if (peak > 1.0) {
    const double scale = 0.99 / peak;
    for (double &v : buf.samples) v *= scale;
  }
}

AudioBuffer convolve_rir(const AudioBuffer &buf, const AudioBuffer &rir) {
  buf.validate();
  rir.validate();
  if (buf.sample_rate_hz != rir.sample_rate_hz)
    throw DataError("convolve_rir: sample-rate mismatch");
  const std::size_t n = buf.size(), m = rir.size();
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.samples.assign(n, 0.0);

  if (n * m <= (1u << 20)) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const std::size_t kmax = std::min(m - 1, i);
      for (std::size_t k = 0; k <= kmax; ++k)
        acc += rir.samples[k] * buf.samples[i - k];
      out.samples[i] = acc;
    }
  } else {
    const int size = next_pow2(static_cast<int>(n + m - 1));
    RealFft fft(size);
    std::vector<std::complex<double>> a(fft.num_bins()), b(fft.num_bins());
    fft.forward(buf.samples, a);
    fft.forward(rir.samples, b);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] *= b[k];
    std::vector<double> full(size);
    fft.inverse(a, full);
    std::copy(full.begin(), full.begin() + n, out.samples.begin());
  }

  double in_peak = 0.0, out_peak = 0.0;
  for (double v : buf.samples) in_peak = std::max(in_peak, std::abs(v));
  for (double v : out.samples) out_peak = std::max(out_peak, std::abs(v));
  if (out_peak > 0.0) {
    const double scale = in_peak / out_peak;
    for (double &v : out.samples) v *= scale;
  }
  return out;
}

namespace {

// Per-sample flags for the 20 ms frames within 40 dB of the loudest frame.
std::vector<bool> active_mask(const AudioBuffer &buf) {
  const std::size_t frame =
      std::max<std::size_t>(1, static_cast<std::size_t>(buf.sample_rate_hz / 50));
  const std::size_t n = buf.size();
  const std::size_t n_frames = (n + frame - 1) / frame;
  std::vector<double> energy(n_frames, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    energy[i / frame] += buf.samples[i] * buf.samples[i];
  for (std::size_t f = 0; f < n_frames; ++f)
    energy[f] /= static_cast<double>(std::min(frame, n - f * frame));
  const double max_e = *std::max_element(energy.begin(), energy.end());
  std::vector<bool> mask(n, false);
  if (max_e <= 0.0) return mask;
  for (std::size_t i = 0; i < n; ++i) mask[i] = energy[i / frame] >= 1e-4 * max_e;
  return mask;
}

double masked_power(const std::vector<double> &x, const std::vector<bool> &mask) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i]) {
      acc += x[i] * x[i];
      ++count;
    }
  return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

}  // namespace

double active_power(const AudioBuffer &buf) {
  if (buf.samples.empty()) return 0.0;
  return masked_power(buf.samples, active_mask(buf));
}

AudioBuffer mix_additive(const AudioBuffer &buf,
                         const AudioBuffer &interference, double snr_db,
                         const MixOptions &opts) {
  buf.validate();
  if (std::isinf(snr_db) && snr_db > 0) return buf;
  if (!std::isfinite(snr_db)) throw ConfigError("mix_additive: SNR must be finite");
  interference.validate();
  if (buf.sample_rate_hz != interference.sample_rate_hz)
    throw DataError("mix_additive: sample-rate mismatch");

  const std::vector<bool> mask = active_mask(buf);
  const double p_signal = masked_power(buf.samples, mask);
  if (p_signal <= 0.0) throw DataError("mix_additive: signal is silent");

  const std::size_t n = buf.size(), m = interference.size();
  std::vector<double> track(n);
  if (opts.refresh_s > 0.0) {
    const std::size_t block = std::max<std::size_t>(
        1, static_cast<std::size_t>(opts.refresh_s * buf.sample_rate_hz));
    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<std::size_t> offset(0, m - 1);
    for (std::size_t start = 0; start < n; start += block) {
      std::size_t src = offset(rng);
      for (std::size_t i = start; i < std::min(n, start + block); ++i) {
        track[i] = interference.samples[src];
        src = (src + 1) % m;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) track[i] = interference.samples[i % m];
  }
  const double p_interf = masked_power(track, mask);
  if (p_interf <= 0.0) throw DataError("mix_additive: interference is silent");

  const double scale =
      std::sqrt(p_signal / (p_interf * std::pow(10.0, snr_db / 10.0)));
  AudioBuffer out = buf;
  for (std::size_t i = 0; i < n; ++i) out.samples[i] += scale * track[i];
  clamp_peak(out);
  return out;
}

AudioBuffer make_babble(const std::vector<AudioBuffer> &pool, int n_speakers,
                        uint64_t seed) {
  if (n_speakers < 3 || n_speakers > 7)
    throw ConfigError("make_babble: n_speakers must be in [3, 7]");
  if (static_cast<int>(pool.size()) < n_speakers)
    throw DataError("make_babble: pool too small");
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n_speakers);
  std::sort(idx.begin(), idx.end());

  std::size_t len = 0;
  const int rate = pool[idx.front()].sample_rate_hz;
  for (std::size_t i : idx) {
    pool[i].validate();
    if (pool[i].sample_rate_hz != rate)
      throw DataError("make_babble: sample-rate mismatch within pool");
    len = std::max(len, pool[i].size());
  }
  AudioBuffer out;
  out.sample_rate_hz = rate;
  out.samples.assign(len, 0.0);
  for (std::size_t i : idx) {
    const AudioBuffer &s = pool[i];
    const double p = active_power(s);
    if (p <= 0.0) throw DataError("make_babble: silent pool entry");
    const double g = 1.0 / std::sqrt(p);
    for (std::size_t j = 0; j < len; ++j)
      out.samples[j] += g * s.samples[j % s.size()];
  }
  return out;
}

AugmentedUtterance corrupt(const Utterance &utt, const CorruptionSource &src,
                           uint64_t seed) {
  if (src.pool.empty())
    throw ConfigError("corruption '" + std::string(to_string(src.spec.kind)) +
                      "' has no loaded audio");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, src.pool.size() - 1);
  AugmentedUtterance out;
  out.id = utt.id + "-" + std::string(to_string(src.spec.kind));
  out.source_id = utt.id;
  out.kind = src.spec.kind;
  out.seed = seed;

  if (src.spec.kind == CorruptionKind::kReverb) {
    out.snr_db = std::numeric_limits<double>::quiet_NaN();
    out.audio = convolve_rir(utt.audio, src.pool[pick(rng)]);
    clamp_peak(out.audio);
    return out;
  }
  const SnrRange range = src.spec.effective_range();
  std::uniform_real_distribution<double> snr(range.low_db, range.high_db);
  out.snr_db = range.low_db == range.high_db ? range.low_db : snr(rng);
  const uint64_t sub_seed = rng();
  switch (src.spec.kind) {
    case CorruptionKind::kNoise:
      out.audio = mix_additive(utt.audio, src.pool[pick(rng)], out.snr_db,
                               {1.0, sub_seed});
      break;
    case CorruptionKind::kMusic:
      out.audio = mix_additive(utt.audio, src.pool[pick(rng)], out.snr_db,
                               {0.0, sub_seed});
      break;
    case CorruptionKind::kBabble: {
      const int hi = static_cast<int>(std::min<std::size_t>(7, src.pool.size()));
      std::uniform_int_distribution<int> count(3, hi);
      const AudioBuffer babble = make_babble(src.pool, count(rng), sub_seed);
      out.audio = mix_additive(utt.audio, babble, out.snr_db);
      break;
    }
    case CorruptionKind::kReverb: break;
  }
  return out;
}

std::array<CorruptionKind, 2> kept_kinds(uint64_t seed,
                                         std::string_view utt_id) {
  std::mt19937_64 rng(derive_seed(seed, "keep:" + std::string(utt_id)));
  std::array<int, 4> order{0, 1, 2, 3};
  std::shuffle(order.begin(), order.end(), rng);
  std::sort(order.begin(), order.begin() + 2);
  return {static_cast<CorruptionKind>(order[0]),
          static_cast<CorruptionKind>(order[1])};
}

std::vector<AugmentedUtterance> augment_corpus(
    const std::vector<Utterance> &utterances,
    const std::array<CorruptionSource, 4> &sources, uint64_t seed) {
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (sources[k].spec.kind != kAllCorruptionKinds[k])
      throw ConfigError("augment_corpus: sources must be ordered reverb, "
                        "noise, music, babble");
    sources[k].spec.validate();
  }
  std::vector<AugmentedUtterance> out;
  out.reserve(utterances.size() * 3);
  for (const auto &utt : utterances) {
    AugmentedUtterance orig;
    orig.id = utt.id;
    orig.source_id = utt.id;
    orig.audio = utt.audio;
    out.push_back(std::move(orig));
    for (CorruptionKind kind : kept_kinds(seed, utt.id)) {
      const uint64_t s =
          derive_seed(seed, utt.id + ":" + std::string(to_string(kind)));
      out.push_back(corrupt(utt, sources[static_cast<int>(kind)], s));
    }
  }
  return out;
}

}  // namespace voicepd
