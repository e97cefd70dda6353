#include "vila/dsp.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace vila::dsp {

namespace {
constexpr double kPi = std::numbers::pi;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }
}  // namespace

void SpectrogramConfig::validate() const {
  if (target_rate_hz <= 0 || n_mels <= 0 || n_frames <= 0 || fft_size <= 0 ||
      hop < 0 || log_floor <= 0.0) {
    throw std::invalid_argument("invalid spectrogram config");
  }
  if (!is_pow2(fft_size)) {
    throw std::invalid_argument("fft_size must be a power of two");
  }
  if (n_mels > fft_size / 2 + 1) {
    throw std::invalid_argument("null mel bins");
  }
}

void fft(std::vector<std::complex<double>>& buf) {
  const std::size_t n = buf.size();
  if (n < 2) return;
  if ((n & (n - 1)) != 0) throw std::invalid_argument("fft size not power of two");

  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = buf[i + k];
        const std::complex<double> v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

namespace {

RawClip resample_linear(const RawClip& clip, int target_rate_hz,
                        std::size_t n_out) {
  RawClip out;
  out.sample_rate_hz = target_rate_hz;
  out.source_id = clip.source_id;
  out.samples.resize(n_out);
  const double step =
      static_cast<double>(clip.sample_rate_hz) / target_rate_hz;
  const std::size_t n_in = clip.samples.size();
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) * step;
    const auto i0 = static_cast<std::size_t>(t);
    if (i0 + 1 >= n_in) {
      out.samples[i] = clip.samples[n_in - 1];
    } else {
      const double frac = t - static_cast<double>(i0);
      out.samples[i] =
          clip.samples[i0] * (1.0 - frac) + clip.samples[i0 + 1] * frac;
    }
  }
  return out;
}

// Windowed-sinc resampler evaluated directly at each output instant.
// Kernel weights are renormalized per output sample so DC is preserved.
RawClip resample_sinc(const RawClip& clip, int target_rate_hz,
                      std::size_t n_out) {
  RawClip out;
  out.sample_rate_hz = target_rate_hz;
  out.source_id = clip.source_id;
  out.samples.resize(n_out);

  const double ratio =
      static_cast<double>(target_rate_hz) / clip.sample_rate_hz;
  // cutoff relative to the input Nyquist; anti-alias when decimating
  const double fc = 0.5 * std::min(1.0, ratio);
  const int half_width =
      static_cast<int>(std::ceil(8.0 / std::min(1.0, ratio)));
  const auto n_in = static_cast<std::ptrdiff_t>(clip.samples.size());

  for (std::size_t i = 0; i < n_out; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const auto k0 = static_cast<std::ptrdiff_t>(std::floor(center)) - half_width;
    const auto k1 = static_cast<std::ptrdiff_t>(std::floor(center)) + half_width + 1;
    double acc = 0.0, wsum = 0.0;
    for (std::ptrdiff_t k = k0; k <= k1; ++k) {
      const double t = center - static_cast<double>(k);
      const double x = 2.0 * fc * t;
      const double sinc =
          x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
      // Hann window over the kernel span
      const double wt =
          0.5 + 0.5 * std::cos(kPi * t / (half_width + 1.0));
      const double w = sinc * wt;
      wsum += w;
      if (k >= 0 && k < n_in) acc += clip.samples[k] * w;
      else if (k < 0) acc += clip.samples[0] * w;
      else acc += clip.samples[n_in - 1] * w;
    }
    out.samples[i] = acc / wsum;
  }
  return out;
}

}  // namespace

RawClip resample(const RawClip& clip, int target_rate_hz) {
  if (clip.samples.empty()) throw std::invalid_argument("empty clip");
  if (target_rate_hz <= 0) throw std::invalid_argument("invalid rate");
  if (target_rate_hz > clip.sample_rate_hz) {
    throw std::invalid_argument("invalid rate");
  }
  const std::size_t n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(clip.samples.size()) * target_rate_hz /
      clip.sample_rate_hz));
  if (target_rate_hz == clip.sample_rate_hz) return clip;

  const int g = std::gcd(clip.sample_rate_hz, target_rate_hz);
  const int up = target_rate_hz / g;
  const int down = clip.sample_rate_hz / g;
  if (up <= 1024 && down <= 1024) {
    return resample_sinc(clip, target_rate_hz, n_out);
  }
  return resample_linear(clip, target_rate_hz, n_out);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Matrix mel_filterbank(const SpectrogramConfig& config) {
  config.validate();
  const int n_bins = config.fft_size / 2 + 1;
  const double nyquist = config.target_rate_hz / 2.0;
  const double mel_max = hz_to_mel(nyquist);

  std::vector<double> edges(config.n_mels + 2);
  for (int i = 0; i < config.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mel_max * i / (config.n_mels + 1));
  }

  Matrix fb = Matrix::Zero(config.n_mels, n_bins);
  const double bin_hz = nyquist / (n_bins - 1);
  for (int m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = b * bin_hz;
      double w = 0.0;
      if (f >= lo && f <= mid && mid > lo) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f <= hi && hi > mid) {
        w = (hi - f) / (hi - mid);
      }
      fb(m, b) = w;
    }
    if (fb.row(m).sum() <= 0.0) {
      // some triangle fell between FFT bins, the degenerate case the
      // 32-bin choice exists to avoid
      throw std::invalid_argument("null mel bins");
    }
  }
  return fb;
}

int derive_hop(std::size_t n_samples, const SpectrogramConfig& config) {
  if (config.hop > 0) return config.hop;
  if (config.n_frames == 1) return 1;
  const auto span = static_cast<std::ptrdiff_t>(n_samples) - config.fft_size;
  if (span < 0) throw std::invalid_argument("clip too short");
  return std::max<int>(1, static_cast<int>(span / (config.n_frames - 1)));
}

Spectrogram to_spectrogram(const RawClip& clip,
                           const SpectrogramConfig& config) {
  config.validate();
  if (clip.samples.empty()) throw std::invalid_argument("empty clip");
  if (static_cast<int>(clip.samples.size()) < config.fft_size) {
    throw std::invalid_argument("clip too short");
  }

  const Matrix fb = mel_filterbank(config);
  const int hop = derive_hop(clip.samples.size(), config);
  const int n_bins = config.fft_size / 2 + 1;

  std::vector<double> window(config.fft_size);
  for (int i = 0; i < config.fft_size; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (config.fft_size - 1));
  }

  Spectrogram spec;
  spec.config = config;
  spec.config.hop = hop;
  spec.source_id = clip.source_id;
  spec.values.resize(config.n_frames, config.n_mels);

  std::vector<std::complex<double>> buf(config.fft_size);
  Eigen::VectorXd power(n_bins);
  const auto n = static_cast<std::ptrdiff_t>(clip.samples.size());
  for (int t = 0; t < config.n_frames; ++t) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * hop;
    for (int i = 0; i < config.fft_size; ++i) {
      const std::ptrdiff_t idx = start + i;
      const double s = (idx < n) ? clip.samples[idx] : 0.0;
      buf[i] = s * window[i];
    }
    fft(buf);
    for (int b = 0; b < n_bins; ++b) power[b] = std::norm(buf[b]);
    spec.values.row(t) =
        ((fb * power).array() + config.log_floor).log().transpose();
  }
  return spec;
}

Spectrogram normalize(const Spectrogram& spec) {
  if (!spec.values.allFinite()) {
    throw std::invalid_argument("non-finite spectrogram");
  }
  Spectrogram out = spec;
  const double lo = spec.values.minCoeff();
  const double hi = spec.values.maxCoeff();
  if (hi - lo <= 0.0) {
    out.values.setConstant(0.5);
  } else {
    out.values = (spec.values.array() - lo) / (hi - lo);
  }
  return out;
}

}  // namespace vila::dsp
