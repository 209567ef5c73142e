// src/audio.cc

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

#include "voicepd/audio.h"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>

#include "voicepd/common.h"

namespace voicepd {

void AudioBuffer::validate() const {
  if (sample_rate_hz <= 0)
    throw DataError("audio sample rate must be positive");
  if (samples.empty()) throw DataError("zero-length audio");
  for (double s : samples)
    if (!std::isfinite(s)) throw DataError("audio contains non-finite samples");
}

double power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

double rms(std::span<const double> x) { return std::sqrt(power(x)); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// ---------------------------------------------------------------------------
// WAV

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint32_t read_u32(const unsigned char *p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}
uint16_t read_u16(const unsigned char *p) {
  return uint16_t(p[0] | (p[1] << 8));
}

void put_u32(std::ostream &os, uint32_t v) {
  std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff),
                        char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}
void put_u16(std::ostream &os, uint16_t v) {
  std::array<char, 2> b{char(v & 0xff), char((v >> 8) & 0xff)};
  os.write(b.data(), 2);
}

}  // namespace

AudioBuffer load_wav(const std::filesystem::path &path,
                     std::optional<int> channel) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError(name + ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char *data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char *hdr = bytes.data() + pos;
    uint32_t chunk_size = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16 || avail < 16)
        throw DataError(name + ": truncated fmt chunk");
      const unsigned char *f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible && chunk_size >= 26 && avail >= 26)
        format = read_u16(f + 24);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(chunk_size, avail);
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
  if (format == 0) throw DataError(name + ": missing fmt chunk");
  if (data == nullptr) throw DataError(name + ": missing data chunk");
  if (format != kFormatPcm)
    throw DataError(name + ": unsupported encoding (only integer PCM)");
  if (bits != 16 && bits != 24)
    throw DataError(name + ": unsupported bit depth " + std::to_string(bits));
  if (channels == 0) throw DataError(name + ": zero channels");
  int ch = 0;
  if (channels > 1) {
    if (!channel)
      throw DataError(name + ": unsupported channel count " +
                      std::to_string(channels));
    ch = *channel;
  } else if (channel && *channel != 0) {
    throw DataError(name + ": channel index out of range");
  }
  if (ch < 0 || ch >= channels)
    throw DataError(name + ": channel index out of range");

  const int bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = std::size_t(bytes_per_sample) * channels;
  const std::size_t n = data_size / frame_bytes;
  if (n == 0) throw DataError(name + ": zero-length audio");

  AudioBuffer buf;
  buf.sample_rate_hz = static_cast<int>(rate);
  buf.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char *p = data + i * frame_bytes + ch * bytes_per_sample;
    if (bits == 16) {
      int16_t v = static_cast<int16_t>(read_u16(p));
      buf.samples[i] = v / 32768.0;
    } else {
      int32_t v = int32_t(p[0]) | (int32_t(p[1]) << 8) | (int32_t(p[2]) << 16);
      if (v & 0x800000) v -= 0x1000000;
      buf.samples[i] = v / 8388608.0;
    }
  }
  return buf;
}

void save_wav(const std::filesystem::path &path, const AudioBuffer &buf,
              int bits_per_sample) {
  if (bits_per_sample != 16 && bits_per_sample != 24)
    throw ConfigError("save_wav: bits_per_sample must be 16 or 24");
  buf.validate();
  const uint32_t bytes_per_sample = bits_per_sample / 8;
  const uint32_t data_size =
      static_cast<uint32_t>(buf.samples.size() * bytes_per_sample);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write audio file " + path.string());
  os.write("RIFF", 4);
  put_u32(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_u32(os, 16);
  put_u16(os, kFormatPcm);
  put_u16(os, 1);
  put_u32(os, static_cast<uint32_t>(buf.sample_rate_hz));
  put_u32(os, static_cast<uint32_t>(buf.sample_rate_hz) * bytes_per_sample);
  put_u16(os, static_cast<uint16_t>(bytes_per_sample));
  put_u16(os, static_cast<uint16_t>(bits_per_sample));
  os.write("data", 4);
  put_u32(os, data_size);
  const double full_scale = bits_per_sample == 16 ? 32768.0 : 8388608.0;
  std::vector<char> out(data_size);
  for (std::size_t i = 0; i < buf.samples.size(); ++i) {
    double v = std::round(buf.samples[i] * full_scale);
    v = std::clamp(v, -full_scale, full_scale - 1.0);
    int32_t iv = static_cast<int32_t>(v);
    for (uint32_t b = 0; b < bytes_per_sample; ++b)
      out[i * bytes_per_sample + b] = static_cast<char>((iv >> (8 * b)) & 0xff);
  }
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

constexpr double kResampleKaiserBeta = 9.0;
constexpr int kResampleZeroCrossings = 32;

}  // namespace

AudioBuffer resample(const AudioBuffer &buf, int target_hz) {
  if (target_hz < 4000)
    throw ConfigError("resample: target rate must be >= 4000 Hz");
  buf.validate();
  const int src = buf.sample_rate_hz;
  if (src == target_hz) return buf;

  const double cutoff = 0.9 * 0.5 * std::min(src, target_hz);
  const double half_width = kResampleZeroCrossings / (2.0 * cutoff);
  const double i0_beta = std::cyl_bessel_i(0.0, kResampleKaiserBeta);
  auto filter = [&](double t) {
    if (std::abs(t) >= half_width) return 0.0;
    double r = t / half_width;
    double window =
        std::cyl_bessel_i(0.0, kResampleKaiserBeta * std::sqrt(1.0 - r * r)) /
        i0_beta;
    double x = 2.0 * cutoff * t;
    double sinc = x == 0.0 ? 1.0
                           : std::sin(std::numbers::pi * x) /
                                 (std::numbers::pi * x);
    return 2.0 * cutoff * sinc * window / src;
  };

  // Output sample n sits at time n / target_hz. The pattern of input offsets
  // and weights repeats every (target_hz / g) output samples.
  const int g = std::gcd(src, target_hz);
  const int out_period = target_hz / g;
  const int in_period = src / g;
  std::vector<int> first(out_period);
  std::vector<std::vector<double>> weights(out_period);
  for (int i = 0; i < out_period; ++i) {
    const double t = static_cast<double>(i) / target_hz;
    const int lo = static_cast<int>(std::ceil((t - half_width) * src));
    const int hi = static_cast<int>(std::floor((t + half_width) * src));
    first[i] = lo;
    weights[i].resize(hi - lo + 1);
    for (int k = lo; k <= hi; ++k)
      weights[i][k - lo] = filter(t - static_cast<double>(k) / src);
  }

  const int64_t n_in = static_cast<int64_t>(buf.samples.size());
  const int64_t n_out = n_in * target_hz / src;
  AudioBuffer out;
  out.sample_rate_hz = target_hz;
  out.samples.assign(static_cast<std::size_t>(n_out), 0.0);
  for (int64_t n = 0; n < n_out; ++n) {
    const int64_t q = n / out_period;
    const int phase = static_cast<int>(n % out_period);
    const int64_t base = q * in_period + first[phase];
    const auto &w = weights[phase];
    double acc = 0.0;
    const int64_t j0 = std::max<int64_t>(0, -base);
    const int64_t j1 = std::min<int64_t>(static_cast<int64_t>(w.size()),
                                         n_in - base);
    for (int64_t j = j0; j < j1; ++j) acc += w[j] * buf.samples[base + j];
    out.samples[n] = acc;
  }
  if (out.samples.empty())
    throw DataError("resample: output would be empty");
  return out;
}

// ---------------------------------------------------------------------------
// FFT

namespace {
std::mutex &fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(int n) : n_(n) {
  if (n < 2) throw ConfigError("RealFft: size must be >= 2");
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  real_ = fftw_alloc_real(n);
  auto *cplx = fftw_alloc_complex(n / 2 + 1);
  complex_ = cplx;
  plan_fwd_ = fftw_plan_dft_r2c_1d(n, real_, cplx, FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_c2r_1d(n, cplx, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() { release(); }

void RealFft::release() {
  if (n_ == 0) return;
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  if (plan_fwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  if (plan_inv_) fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  fftw_free(real_);
  fftw_free(complex_);
  plan_fwd_ = plan_inv_ = nullptr;
  real_ = nullptr;
  complex_ = nullptr;
  n_ = 0;
}

RealFft::RealFft(RealFft &&other) noexcept { *this = std::move(other); }

RealFft &RealFft::operator=(RealFft &&other) noexcept {
  if (this != &other) {
    release();
    std::swap(n_, other.n_);
    std::swap(real_, other.real_);
    std::swap(complex_, other.complex_);
    std::swap(plan_fwd_, other.plan_fwd_);
    std::swap(plan_inv_, other.plan_inv_);
  }
  return *this;
}

void RealFft::forward(std::span<const double> in,
                      std::span<std::complex<double>> out) {
  if (static_cast<int>(in.size()) > n_ ||
      static_cast<int>(out.size()) < num_bins())
    throw ConfigError("RealFft::forward: bad buffer sizes");
  std::copy(in.begin(), in.end(), real_);
  std::fill(real_ + in.size(), real_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(plan_fwd_));
  const auto *c = static_cast<const fftw_complex *>(complex_);
  for (int k = 0; k < num_bins(); ++k) out[k] = {c[k][0], c[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in,
                      std::span<double> out) {
  if (static_cast<int>(in.size()) < num_bins() ||
      static_cast<int>(out.size()) < n_)
    throw ConfigError("RealFft::inverse: bad buffer sizes");
  auto *c = static_cast<fftw_complex *>(complex_);
  for (int k = 0; k < num_bins(); ++k) {
    c[k][0] = in[k].real();
    c[k][1] = in[k].imag();
  }
  fftw_execute(static_cast<fftw_plan>(plan_inv_));
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
}

}  // namespace voicepd
