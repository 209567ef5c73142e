// src/demo.cc

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

#include "voicepd/demo.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace voicepd {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// F1, F2, F3 of five reference vowels.
constexpr std::array<std::array<double, 3>, 5> kVowels = {{
    {730.0, 1090.0, 2440.0},
    {270.0, 2290.0, 3010.0},
    {300.0, 870.0, 2240.0},
    {530.0, 1840.0, 2480.0},
    {570.0, 840.0, 2410.0},
}};
constexpr std::array<double, 3> kVowelCentre = {480.0, 1386.0, 2516.0};
constexpr std::array<double, 3> kBandwidths = {80.0, 100.0, 140.0};

// Second-order digital resonator.
class Resonator {
 public:
  void set(double freq, double bw, double rate) {
    c_ = -std::exp(-kTwoPi * bw / rate);
    b_ = 2.0 * std::exp(-std::numbers::pi * bw / rate) * std::cos(kTwoPi * freq / rate);
    a_ = 1.0 - b_ - c_;
  }
  double operator()(double x) {
    const double y = a_ * x + b_ * y1_ + c_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a_ = 1.0, b_ = 0.0, c_ = 0.0, y1_ = 0.0, y2_ = 0.0;
};

struct Gauss {
  double mean, sd;
};

struct GroupModel {
  Gauss scale, breath, jitter, tilt, articulation;
};

constexpr GroupModel kHcModel = {{1.0, 0.025}, {0.20, 0.05}, {0.004, 0.001}, {0.90, 0.015}, {1.0, 0.06}};
constexpr GroupModel kPdModel = {{0.93, 0.025}, {0.55, 0.07}, {0.012, 0.002}, {0.80, 0.015}, {0.72, 0.06}};

double draw(const Gauss &g, std::mt19937_64 &rng, double lo, double hi) {
  std::normal_distribution<double> n(g.mean, g.sd);
  return std::clamp(n(rng), lo, hi);
}

std::string subject_name(std::string_view prefix, int i) {
  std::string n = std::to_string(i + 1);
  return std::string(prefix) + std::string(3 - std::min<size_t>(3, n.size()), '0') + n;
}

void write(const AudioBuffer &b, const std::filesystem::path &p) {
  save_wav(p, b, 16);
}

}  // namespace

VoiceParams draw_voice(std::optional<ClassLabel> group, Sex sex, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (!group) group = u(rng) < 0.5 ? ClassLabel::kHC : ClassLabel::kPD;
  const GroupModel &g = *group == ClassLabel::kPD ? kPdModel : kHcModel;
  VoiceParams v;
  v.f0_hz = sex == Sex::kMale ? 95.0 + 50.0 * u(rng) : 170.0 + 70.0 * u(rng);
  v.formant_scale = draw(g.scale, rng, 0.8, 1.2);
  if (sex == Sex::kFemale) v.formant_scale *= 1.12;
  v.breathiness = draw(g.breath, rng, 0.0, 1.0);
  v.jitter = draw(g.jitter, rng, 0.0, 0.05);
  v.tilt = draw(g.tilt, rng, 0.5, 0.98);
  v.articulation = draw(g.articulation, rng, 0.2, 1.3);
  return v;
}

AudioBuffer render_speech(const VoiceParams &v, double seconds, int rate_hz,
                          uint64_t seed) {
  if (seconds <= 0.0 || rate_hz < 4000)
    throw ConfigError("render_speech: bad duration or rate");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const size_t total = static_cast<size_t>(std::llround(seconds * rate_hz));
  AudioBuffer out;
  out.sample_rate_hz = rate_hz;
  out.samples.assign(total, 0.0);

  const size_t lead = static_cast<size_t>(0.3 * rate_hz);
  size_t pos = lead;
  std::array<Resonator, 3> res;
  double glottal = 0.0;
  while (pos + static_cast<size_t>(0.5 * rate_hz) < total) {
    const size_t len = static_cast<size_t>((0.18 + 0.22 * u(rng)) * rate_hz);
    const auto &formants = kVowels[static_cast<size_t>(u(rng) * kVowels.size()) % kVowels.size()];
    for (int k = 0; k < 3; ++k)
      res[k].set(std::min((kVowelCentre[k] +
                           v.articulation * (formants[k] - kVowelCentre[k])) *
                              v.formant_scale,
                          0.45 * rate_hz),
                 kBandwidths[k], rate_hz);
    const double amp = 0.6 + 0.4 * u(rng);
    const double f0 = v.f0_hz * (0.92 + 0.16 * u(rng));
    // RMS of the low-passed pulse train, so breathiness is a relative level.
    const double pulse_rms =
        std::sqrt(400.0 * (1.0 - v.tilt) / (1.0 + v.tilt) * f0 / rate_hz);
    const size_t ramp = static_cast<size_t>(0.025 * rate_hz);
    double next_pulse = 0.0;
    for (size_t i = 0; i < len && pos + i < total; ++i) {
      double exc = 0.0;
      if (static_cast<double>(i) >= next_pulse) {
        exc = 1.0;
        next_pulse += rate_hz / f0 * (1.0 + v.jitter * n(rng));
      }
      glottal = v.tilt * glottal + (1.0 - v.tilt) * exc * 20.0;
      const double src = glottal + v.breathiness * pulse_rms * n(rng);
      double y = src;
      for (auto &r : res) y = r(y);
      double env = 1.0;
      if (i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * i / ramp);
      if (len - i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (len - i) / ramp);
      out.samples[pos + i] = amp * env * y;
    }
    pos += len + static_cast<size_t>((0.08 + 0.17 * u(rng)) * rate_hz);
  }
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double &s : out.samples) s *= 0.5 / peak;
  return out;
}

AudioBuffer render_room_noise(double seconds, int rate_hz, double level_rms,
                              uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  AudioBuffer b;
  b.sample_rate_hz = rate_hz;
  b.samples.resize(static_cast<size_t>(std::llround(seconds * rate_hz)));
  double lp = 0.0;
  for (double &s : b.samples) {
    lp = 0.7 * lp + n(rng);
    s = lp;
  }
  const double r = rms(b.samples);
  for (double &s : b.samples) s *= level_rms / r;
  return b;
}

DemoLayout demo_layout(const std::filesystem::path &out_dir) {
  return {out_dir / "manifest.jsonl", out_dir / "background.jsonl",
          out_dir / "pools" / "rir",  out_dir / "pools" / "noise",
          out_dir / "pools" / "music", out_dir / "pools" / "babble"};
}

DemoLayout generate_demo(const std::filesystem::path &out_dir,
                         const DemoOptions &opts) {
  if (opts.n_pd < 1 || opts.n_hc < 1 || opts.n_background < 0 ||
      opts.utterance_s < 1.0)
    throw ConfigError("demo-data: invalid sizes");
  const DemoLayout layout = demo_layout(out_dir);
  const int rate = opts.channel == Channel::kTelephone ? 8000 : 16000;
  const auto audio_dir = out_dir / "audio";
  for (const auto &d : {audio_dir, layout.rir_dir, layout.noise_dir,
                        layout.music_dir, layout.babble_dir})
    std::filesystem::create_directories(d);

  auto speaker = [&](const std::string &id, std::optional<ClassLabel> group,
                     Sex sex, const std::vector<std::pair<Task, std::string>> &utts,
                     std::vector<ManifestRecord> *records) {
    const VoiceParams v = draw_voice(group, sex, derive_seed(opts.seed, "voice:" + id));
    // One room per speaker; the noise file is a separate stretch of it.
    const uint64_t room = derive_seed(opts.seed, "room:" + id);
    const double level = 0.002 + 0.002 * static_cast<double>(room % 1000) / 1000.0;
    const std::string noise_rel = "audio/" + id + "_noise.wav";
    write(render_room_noise(5.0, rate, level, room), out_dir / noise_rel);
    for (const auto &[task, session] : utts) {
      ManifestRecord r;
      r.subject_id = id;
      r.group = group;
      r.sex = sex;
      r.task = task;
      r.session_id = session;
      r.channel = opts.channel;
      r.path = "audio/" + r.utterance_id() + ".wav";
      r.noise_path = noise_rel;
      AudioBuffer speech = render_speech(
          v, opts.utterance_s, rate, derive_seed(opts.seed, "speech:" + r.utterance_id()));
      const AudioBuffer noise = render_room_noise(
          opts.utterance_s, rate, level, derive_seed(room, r.utterance_id()));
      for (size_t i = 0; i < speech.size(); ++i) speech.samples[i] += noise.samples[i];
      write(speech, out_dir / r.path);
      records->push_back(std::move(r));
    }
  };

  auto sex_of = [&](int i) {
    return opts.sex ? *opts.sex : (i % 2 == 0 ? Sex::kMale : Sex::kFemale);
  };
  std::vector<ManifestRecord> cohort;
  const std::vector<std::pair<Task, std::string>> cohort_utts = {
      {Task::kReading, "s1"}, {Task::kMonologue, "s1"}};
  for (int i = 0; i < opts.n_pd; ++i)
    speaker(subject_name("pd", i), ClassLabel::kPD, sex_of(i), cohort_utts, &cohort);
  for (int i = 0; i < opts.n_hc; ++i)
    speaker(subject_name("hc", i), ClassLabel::kHC, sex_of(i), cohort_utts, &cohort);
  write_manifest(cohort, layout.manifest);

  std::vector<ManifestRecord> background;
  std::vector<std::pair<Task, std::string>> bg_utts;
  for (int k = 0; k < opts.background_utterances; ++k)
    bg_utts.push_back({Task::kMonologue, "b" + std::to_string(k + 1)});
  for (int i = 0; i < opts.n_background; ++i)
    speaker(subject_name("bg", i), std::nullopt, sex_of(i), bg_utts, &background);
  write_manifest(background, layout.background_manifest);

  // Corruption pools.
  for (int i = 0; i < 3; ++i) {
    std::mt19937_64 rng(derive_seed(opts.seed, "rir" + std::to_string(i)));
    std::normal_distribution<double> n(0.0, 1.0);
    AudioBuffer h;
    h.sample_rate_hz = rate;
    h.samples.resize(static_cast<size_t>(0.25 * rate));
    const double rt = 0.15 + 0.15 * i;
    for (size_t t = 0; t < h.size(); ++t)
      h.samples[t] = 0.3 * n(rng) * std::exp(-6.9 * t / (rt * rate));
    h.samples[0] = 1.0;
    double pk = 0;
    for (double s : h.samples) pk = std::max(pk, std::abs(s));
    for (double &s : h.samples) s *= 0.9 / pk;
    write(h, layout.rir_dir / ("rir" + std::to_string(i + 1) + ".wav"));
  }
  for (int i = 0; i < 3; ++i) {
    std::mt19937_64 rng(derive_seed(opts.seed, "noise" + std::to_string(i)));
    std::normal_distribution<double> n(0.0, 1.0);
    AudioBuffer b;
    b.sample_rate_hz = rate;
    b.samples.resize(static_cast<size_t>(4.0 * rate));
    const double pole = 0.45 * i;
    double lp = 0.0;
    for (double &s : b.samples) s = lp = pole * lp + n(rng);
    const double r = rms(b.samples);
    for (double &s : b.samples) s *= 0.1 / r;
    write(b, layout.noise_dir / ("noise" + std::to_string(i + 1) + ".wav"));
  }
  for (int i = 0; i < 2; ++i) {
    std::mt19937_64 rng(derive_seed(opts.seed, "music" + std::to_string(i)));
    std::uniform_int_distribution<int> note(0, 24);
    AudioBuffer b;
    b.sample_rate_hz = rate;
    b.samples.assign(static_cast<size_t>(6.0 * rate), 0.0);
    const size_t step = static_cast<size_t>(0.25 * rate);
    for (size_t start = 0; start < b.size(); start += step) {
      const double f = 110.0 * (1 + i) * std::pow(2.0, note(rng) / 12.0);
      for (size_t t = start; t < std::min(b.size(), start + step); ++t)
        for (int h = 1; h <= 4; ++h)
          b.samples[t] += 0.05 / h * std::sin(kTwoPi * f * h * t / rate) *
                          std::exp(-3.0 * (t - start) / static_cast<double>(step));
    }
    write(b, layout.music_dir / ("music" + std::to_string(i + 1) + ".wav"));
  }
  for (int i = 0; i < 8; ++i) {
    const std::string id = "babble" + std::to_string(i + 1);
    const VoiceParams v =
        draw_voice(std::nullopt, i % 2 ? Sex::kFemale : Sex::kMale,
                   derive_seed(opts.seed, "voice:" + id));
    write(render_speech(v, 3.0, rate, derive_seed(opts.seed, "speech:" + id)),
          layout.babble_dir / (id + ".wav"));
  }
  spdlog::info("demo-data: {} cohort and {} background recordings in {}",
               cohort.size(), background.size(), out_dir.string());
  return layout;
}

}  // namespace voicepd
