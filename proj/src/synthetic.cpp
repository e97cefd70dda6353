#include "vila/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vila/rng.hpp"

namespace vila::synthetic {

namespace {

constexpr double kPi = std::numbers::pi;

// four shared carrier bands (Hz)
constexpr double kBands[4] = {40.0, 110.0, 220.0, 380.0};

struct ClassRecipe {
  int band_a;
  int band_b;
  double burst_rate_hz;
};

// Pairs of classes share a band combination and differ only in burst
// rate, so their time-averaged spectra coincide.
constexpr ClassRecipe kRecipes[finetune::kNumClasses] = {
    {0, 1, 0.5},  // booing
    {0, 1, 2.0},  // stomping
    {2, 3, 0.5},  // cheering
    {2, 3, 2.0},  // clapping
    {1, 2, 0.5},  // moving
    {1, 2, 2.0},  // active
    {0, 3, 1.0},  // quiet
};

struct BandTone {
  double freq;
  double phase;
  double amp;
  double harm_amp;  // second harmonic, zero when it would alias
};

void add_band(std::vector<double>& samples, const BandTone& tone,
              double burst_rate, double burst_phase, bool first_half,
              int rate_hz) {
  const double w = 2.0 * kPi * tone.freq;
  const double w2 = 2.0 * kPi * tone.freq * 2.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    // smooth sin^2 / cos^2 alternation between the two bands; unlike a
    // hard gate its time statistics are identical at every burst rate, so
    // rate shows up only in the rhythm, not in time-averaged spectra
    const double arg = kPi * (t * burst_rate + burst_phase);
    const double s2 = std::sin(arg) * std::sin(arg);
    const double base = first_half ? s2 : 1.0 - s2;
    const double env = base * base * base;  // sharpened duty, same time statistics
    double v = tone.amp * std::sin(w * t + tone.phase);
    if (tone.harm_amp > 0.0) {
      v += tone.harm_amp * std::sin(w2 * t + 2.0 * tone.phase);
    }
    samples[i] += env * v;
  }
}

dsp::RawClip gen_clip_impl(finetune::BehaviorClass label,
                           SynthModality modality, std::uint64_t seed,
                           const GeneratorConfig& cfg, bool with_noise) {
  const auto& recipe = kRecipes[static_cast<int>(label)];
  Rng rng(seed);

  const bool audio = modality == SynthModality::audio;
  auto band_freq = [&](int band) {
    double f = kBands[band];
    if (audio) f = f * cfg.audio_freq_warp + cfg.audio_freq_shift;
    // wide per-clip detune: band positions vary item to item, so a
    // reconstruction model cannot fall back on a corpus-mean template
    return f * rng.uniform(0.88, 1.12);
  };
  const double nyquist = cfg.sample_rate_hz / 2.0;
  auto make_tone = [&](int band) {
    BandTone tone;
    tone.freq = band_freq(band);
    tone.phase = rng.uniform(0.0, 2.0 * kPi);
    tone.amp = rng.uniform(0.7, 1.0);
    tone.harm_amp =
        (2.0 * tone.freq < 0.9 * nyquist) ? 0.35 * tone.amp : 0.0;
    return tone;
  };

  const BandTone tone_a = make_tone(recipe.band_a);
  const BandTone tone_b = make_tone(recipe.band_b);
  const double burst_phase = rng.uniform(0.0, 1.0);

  dsp::RawClip clip;
  clip.sample_rate_hz = cfg.sample_rate_hz;
  clip.source_id = "synth-" + finetune::class_names()[static_cast<int>(label)] +
                   "-" + std::to_string(seed);
  clip.samples.assign(
      static_cast<std::size_t>(std::llround(cfg.sample_rate_hz * cfg.duration_s)),
      0.0);

  add_band(clip.samples, tone_a, recipe.burst_rate_hz, burst_phase, true,
           cfg.sample_rate_hz);
  add_band(clip.samples, tone_b, recipe.burst_rate_hz, burst_phase, false,
           cfg.sample_rate_hz);

  if (with_noise) {
    const double sigma = audio ? cfg.audio_noise : cfg.vibration_noise;
    for (auto& s : clip.samples) s += sigma * rng.normal();
  }
  return clip;
}

dsp::SpectrogramConfig spec_config(SynthModality modality,
                                   const GeneratorConfig& cfg) {
  dsp::SpectrogramConfig sc;
  sc.target_rate_hz = cfg.sample_rate_hz;
  sc.n_mels = cfg.n_mels;
  sc.n_frames = modality == SynthModality::audio ? cfg.pretrain_frames
                                                 : cfg.finetune_frames;
  return sc;
}

}  // namespace

dsp::RawClip gen_clip(finetune::BehaviorClass label, SynthModality modality,
                      std::uint64_t seed, const GeneratorConfig& cfg) {
  return gen_clip_impl(label, modality, seed, cfg, true);
}

dsp::Spectrogram gen_spectrogram(finetune::BehaviorClass label,
                                 SynthModality modality, std::uint64_t seed,
                                 const GeneratorConfig& cfg) {
  const auto clip = gen_clip(label, modality, seed, cfg);
  return dsp::normalize(dsp::to_spectrogram(clip, spec_config(modality, cfg)));
}

dsp::Spectrogram class_template(finetune::BehaviorClass label,
                                const GeneratorConfig& cfg) {
  const auto clip = gen_clip_impl(label, SynthModality::vibration,
                                  /*seed=*/0, cfg, /*with_noise=*/false);
  return dsp::normalize(
      dsp::to_spectrogram(clip, spec_config(SynthModality::vibration, cfg)));
}

SyntheticCorpus gen_synthetic_corpus(std::uint64_t seed, int n_pretrain,
                                     int n_labeled,
                                     const GeneratorConfig& cfg) {
  if (n_pretrain < 1 || n_labeled < 1) {
    throw std::invalid_argument("counts must be >= 1");
  }
  SyntheticCorpus corpus;
  corpus.pretrain.reserve(n_pretrain);
  for (int i = 0; i < n_pretrain; ++i) {
    const auto label =
        static_cast<finetune::BehaviorClass>(i % finetune::kNumClasses);
    corpus.pretrain.push_back(gen_spectrogram(
        label, SynthModality::audio, derive_seed(seed, "pretrain-item", i),
        cfg));
  }

  auto make_labeled = [&](const char* tag, int index) {
    const auto label =
        static_cast<finetune::BehaviorClass>(index % finetune::kNumClasses);
    finetune::LabeledClip clip;
    clip.label = label;
    clip.minute_index = index;
    clip.venue_id = "synthetic";
    clip.spectrogram = gen_spectrogram(label, SynthModality::vibration,
                                       derive_seed(seed, tag, index), cfg);
    return clip;
  };
  corpus.train.reserve(n_labeled);
  for (int i = 0; i < n_labeled; ++i) {
    corpus.train.push_back(make_labeled("train-item", i));
  }
  corpus.eval.reserve(3 * n_labeled);
  for (int i = 0; i < 3 * n_labeled; ++i) {
    corpus.eval.push_back(make_labeled("eval-item", i));
  }
  return corpus;
}

}  // namespace vila::synthetic
