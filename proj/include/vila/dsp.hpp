#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace vila::dsp {

using Matrix = Eigen::MatrixXd;

struct RawClip {
  std::vector<double> samples;
  int sample_rate_hz = 0;
  std::string source_id;

  double duration_s() const {
    return sample_rate_hz > 0
               ? static_cast<double>(samples.size()) / sample_rate_hz
               : 0.0;
  }
};

struct SpectrogramConfig {
  int target_rate_hz = 1000;
  int n_mels = 32;
  int n_frames = 256;   // 256 for pretraining grids, 128 for fine-tuning
  int fft_size = 128;
  int hop = 0;          // 0 = derive from clip length and n_frames
  double log_floor = 1e-10;

  void validate() const;
};

struct Spectrogram {
  // rows = time frames, cols = mel bins
  Matrix values;
  SpectrogramConfig config;
  std::string source_id;

  int n_frames() const { return static_cast<int>(values.rows()); }
  int n_mels() const { return static_cast<int>(values.cols()); }
};

// Radix-2 iterative FFT, in place. n must be a power of two.
void fft(std::vector<std::complex<double>>& buf);

// Rate conversion. Windowed-sinc polyphase when the up/down factors stay
// small after gcd reduction, linear interpolation otherwise. Output length
// is round(n_in * target / source).
RawClip resample(const RawClip& clip, int target_rate_hz);

// Triangular mel filterbank, peak-normalized rows, n_mels x (fft_size/2+1).
// Throws "null mel bins" when some filter would cover no FFT bin.
Matrix mel_filterbank(const SpectrogramConfig& config);

// log(mel . |STFT|^2 + log_floor), framed to exactly n_frames x n_mels.
Spectrogram to_spectrogram(const RawClip& clip, const SpectrogramConfig& config);

// Affine min-max map to [0,1]; a constant grid maps to all 0.5.
Spectrogram normalize(const Spectrogram& spec);

// Frame hop for a clip of n samples: floor((n - fft) / (n_frames - 1)).
int derive_hop(std::size_t n_samples, const SpectrogramConfig& config);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace vila::dsp
