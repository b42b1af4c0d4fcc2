#include "mpa/dsp/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>

#include "mpa/error.hpp"

namespace mpa::dsp {

void Waveform::validate() const {
  if (sample_rate_hz <= 0) throw InvalidInput("sample rate must be positive");
  for (float s : samples) {
    if (!std::isfinite(s)) throw InvalidInput("waveform contains non-finite samples");
  }
}

MelSpectrogram::MelSpectrogram(std::size_t num_frames, std::vector<float> values)
    : num_frames_(num_frames), values_(std::move(values)) {
  if (values_.size() != num_frames_ * kNumMel) {
    throw ShapeError("mel spectrogram expects " + std::to_string(num_frames_ * kNumMel) +
                     " values, got " + std::to_string(values_.size()));
  }
}

std::size_t frame_count(std::size_t num_samples) {
  if (num_samples < kWindowSamples) return 0;
  return 1 + (num_samples - kWindowSamples) / kHopSamples;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

MelFilterbank build_filterbank() {
  MelFilterbank fb;
  const std::size_t nbins = fb.num_fft_bins;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(kMelMaxHz);
  std::vector<double> edges(kNumMel + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(kNumMel + 1));
  }
  fb.center_hz.assign(edges.begin() + 1, edges.end() - 1);
  fb.weights.assign(kNumMel * nbins, 0.0);
  const double bin_hz = static_cast<double>(kFeatureRateHz) / kFftSize;
  for (std::size_t m = 0; m < kNumMel; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < nbins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb.weights[m * nbins + k] = w;
    }
  }
  return fb;
}

std::vector<double> hann_window() {
  std::vector<double> w(kWindowSamples);
  for (std::size_t n = 0; n < kWindowSamples; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(kWindowSamples));
  }
  return w;
}

// One FFTW_ESTIMATE plan shared by all threads through the new-array
// execute interface (planning is not thread safe, execution is).
class RealFft {
 public:
  static const RealFft& instance() {
    static RealFft fft;
    return fft;
  }

  struct Buffers {
    double* in;
    fftw_complex* out;
    Buffers()
        : in(fftw_alloc_real(kFftSize)), out(fftw_alloc_complex(kFftSize / 2 + 1)) {}
    ~Buffers() {
      fftw_free(in);
      fftw_free(out);
    }
    Buffers(const Buffers&) = delete;
    Buffers& operator=(const Buffers&) = delete;
  };

  void execute(Buffers& b) const { fftw_execute_dft_r2c(plan_, b.in, b.out); }

 private:
  RealFft() {
    Buffers probe;
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), probe.in, probe.out,
                                 FFTW_ESTIMATE);
  }
  fftw_plan plan_;
};

void compute_frame(std::span<const float> samples, std::size_t t,
                   const std::vector<double>& window, const MelFilterbank& fb,
                   RealFft::Buffers& buf, std::vector<double>& power,
                   std::span<float> out) {
  const std::size_t start = t * kHopSamples;
  for (std::size_t n = 0; n < kWindowSamples; ++n) {
    buf.in[n] = static_cast<double>(samples[start + n]) * window[n];
  }
  std::fill(buf.in + kWindowSamples, buf.in + kFftSize, 0.0);
  RealFft::instance().execute(buf);
  const std::size_t nbins = fb.num_fft_bins;
  for (std::size_t k = 0; k < nbins; ++k) {
    power[k] = buf.out[k][0] * buf.out[k][0] + buf.out[k][1] * buf.out[k][1];
  }
  for (std::size_t m = 0; m < kNumMel; ++m) {
    const double* w = fb.weights.data() + m * nbins;
    double e = 0.0;
    for (std::size_t k = 0; k < nbins; ++k) e += w[k] * power[k];
    out[m] = static_cast<float>(std::log(std::max(e, static_cast<double>(kEnergyFloor))));
  }
}

}  // namespace

const MelFilterbank& mel_filterbank() {
  static const MelFilterbank fb = build_filterbank();
  return fb;
}

MelSpectrogram log_mel_spectrogram(const Waveform& w, Exec exec) {
  w.validate();
  if (w.sample_rate_hz != kFeatureRateHz) {
    throw InvalidInput("log-mel features need 16000 Hz audio, got " +
                       std::to_string(w.sample_rate_hz) + " Hz");
  }
  const std::size_t frames = frame_count(w.samples.size());
  std::vector<float> values(frames * kNumMel);
  if (frames == 0) return MelSpectrogram(0, std::move(values));

  static const std::vector<double> window = hann_window();
  const MelFilterbank& fb = mel_filterbank();
  (void)RealFft::instance();
  const std::span<const float> samples(w.samples);
  const auto nframes = static_cast<std::ptrdiff_t>(frames);

  if (exec == Exec::Serial) {
    RealFft::Buffers buf;
    std::vector<double> power(fb.num_fft_bins);
    for (std::ptrdiff_t t = 0; t < nframes; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      compute_frame(samples, ut, window, fb, buf, power,
                    std::span<float>(values.data() + ut * kNumMel, kNumMel));
    }
  } else {
#pragma omp parallel
    {
      RealFft::Buffers buf;
      std::vector<double> power(fb.num_fft_bins);
#pragma omp for schedule(static)
      for (std::ptrdiff_t t = 0; t < nframes; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        compute_frame(samples, ut, window, fb, buf, power,
                      std::span<float>(values.data() + ut * kNumMel, kNumMel));
      }
    }
  }
  return MelSpectrogram(frames, std::move(values));
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

constexpr int kZeroCrossings = 16;
constexpr double kRolloff = 0.95;
constexpr double kKaiserBeta = 8.6;

double kaiser(double x, double half_width) {
  const double r = x / half_width;
  if (std::abs(r) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

Waveform resample(const Waveform& w, int target_hz) {
  if (w.samples.empty()) throw InvalidInput("cannot resample an empty waveform");
  if (target_hz <= 0) throw InvalidInput("target rate must be positive");
  w.validate();
  if (target_hz == w.sample_rate_hz) return w;

  const long g = std::gcd(static_cast<long>(target_hz), static_cast<long>(w.sample_rate_hz));
  const long up = target_hz / g;
  const long down = w.sample_rate_hz / g;

  // Cutoff in cycles per input sample.
  const double cutoff = 0.5 * kRolloff * std::min(1.0, static_cast<double>(up) / down);
  const double half_width = kZeroCrossings / (2.0 * cutoff);  // in input samples
  const long taps_half = static_cast<long>(std::ceil(half_width));
  const long taps = 2 * taps_half + 1;

  // Phase p places the output at input position base + p / up; tap j reads
  // input sample base - taps_half + j.
  std::vector<double> table(static_cast<std::size_t>(up * taps));
  for (long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    double sum = 0.0;
    for (long j = 0; j < taps; ++j) {
      const double x = static_cast<double>(j - taps_half) - frac;
      const double h = 2.0 * cutoff * sinc(2.0 * cutoff * x) * kaiser(x, half_width);
      table[static_cast<std::size_t>(p * taps + j)] = h;
      sum += h;
    }
    for (long j = 0; j < taps; ++j) table[static_cast<std::size_t>(p * taps + j)] /= sum;
  }

  const long n_in = static_cast<long>(w.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  Waveform out;
  out.sample_rate_hz = target_hz;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long pos = n * down;
    const long base = pos / up;
    const long phase = pos % up;
    const double* h = table.data() + phase * taps;
    double acc = 0.0;
    const long first = base - taps_half;
    const long j_lo = std::max(0L, -first);
    const long j_hi = std::min(taps, n_in - first);
    for (long j = j_lo; j < j_hi; ++j) {
      acc += h[j] * static_cast<double>(w.samples[static_cast<std::size_t>(first + j)]);
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace mpa::dsp
