#pragma once

#include <cstdint>
#include <vector>

#include "vila/finetune.hpp"

namespace vila::synthetic {

// Desk-scale cross-modal benchmark. Both modalities draw from one
// generative family: each behavior class alternates between two of four
// shared frequency bands at a class-specific burst rate, over a noise
// floor. "Audio" items are frequency-warped and noisier than "vibration"
// items, so transfer is nontrivial but present. Class pairs share
// time-averaged spectra and differ only in rhythm, which keeps a linear
// probe on per-bin means from solving the task.

struct GeneratorConfig {
  int sample_rate_hz = 1000;
  double duration_s = 60.0;
  int pretrain_frames = 256;  // audio side
  int finetune_frames = 128;  // vibration side
  int n_mels = 32;
  double vibration_noise = 0.05;
  double audio_noise = 0.12;
  double audio_freq_warp = 1.15;   // multiplicative band shift
  double audio_freq_shift = 12.0;  // additive band shift, Hz
};

struct SyntheticCorpus {
  std::vector<dsp::Spectrogram> pretrain;       // "audio" modality
  std::vector<finetune::LabeledClip> train;     // "vibration" modality
  std::vector<finetune::LabeledClip> eval;
};

enum class SynthModality { audio, vibration };

// One raw clip of the given class. Fully determined by the seed.
dsp::RawClip gen_clip(finetune::BehaviorClass label, SynthModality modality,
                      std::uint64_t seed, const GeneratorConfig& cfg = {});

// Normalized spectrogram of a generated clip at the modality's frame count.
dsp::Spectrogram gen_spectrogram(finetune::BehaviorClass label,
                                 SynthModality modality, std::uint64_t seed,
                                 const GeneratorConfig& cfg = {});

// Noise-free class template spectrogram (vibration side), for generator
// self-checks.
dsp::Spectrogram class_template(finetune::BehaviorClass label,
                                const GeneratorConfig& cfg = {});

// n_pretrain audio items, n_labeled labeled vibration training clips and
// 3*n_labeled eval clips, class-balanced, all driven by the seed.
SyntheticCorpus gen_synthetic_corpus(std::uint64_t seed, int n_pretrain,
                                     int n_labeled,
                                     const GeneratorConfig& cfg = {});

}  // namespace vila::synthetic
