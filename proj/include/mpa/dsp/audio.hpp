#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpa/parallel.hpp"

namespace mpa::dsp {

inline constexpr int kFeatureRateHz = 16000;
inline constexpr std::size_t kWindowSamples = 400;  // 25 ms
inline constexpr std::size_t kHopSamples = 160;     // 10 ms
inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kNumMel = 80;
inline constexpr double kMelMaxHz = 8000.0;
inline constexpr float kEnergyFloor = 1e-10f;

struct Waveform {
  std::vector<float> samples;
  int sample_rate_hz = kFeatureRateHz;

  // Throws InvalidInput on a non-positive rate or non-finite samples.
  void validate() const;
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// T x 80 natural-log mel energies, row-major.
class MelSpectrogram {
 public:
  MelSpectrogram() = default;
  MelSpectrogram(std::size_t num_frames, std::vector<float> values);

  std::size_t num_frames() const { return num_frames_; }
  static constexpr std::size_t num_bins() { return kNumMel; }
  bool empty() const { return num_frames_ == 0; }

  std::span<const float> frame(std::size_t t) const {
    return {values_.data() + t * kNumMel, kNumMel};
  }
  std::span<float> frame(std::size_t t) {
    return {values_.data() + t * kNumMel, kNumMel};
  }
  const std::vector<float>& values() const { return values_; }

  friend bool operator==(const MelSpectrogram&, const MelSpectrogram&) = default;

 private:
  std::size_t num_frames_ = 0;
  std::vector<float> values_;
};

// 1 + floor((n - window) / hop) for n >= window, else 0.
std::size_t frame_count(std::size_t num_samples);

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters over the 257 one-sided FFT bins; weights_[m * 257 + k].
struct MelFilterbank {
  std::vector<double> center_hz;  // 80 entries
  std::vector<double> weights;
  std::size_t num_fft_bins = kFftSize / 2 + 1;
};

const MelFilterbank& mel_filterbank();

// Band-limited rational resampling (Kaiser-windowed sinc, polyphase).
// Output length is ceil(n * target / source).
Waveform resample(const Waveform& w, int target_hz);

// Requires a 16 kHz waveform; fewer than 400 samples gives an empty result.
MelSpectrogram log_mel_spectrogram(const Waveform& w, Exec exec = Exec::Parallel);

}  // namespace mpa::dsp
