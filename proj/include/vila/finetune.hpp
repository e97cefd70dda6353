#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vila/model.hpp"
#include "vila/train.hpp"

namespace vila::finetune {

// Crowd behaviors ordered by priority; lower value wins when behaviors
// coincide in one minute.
enum class BehaviorClass : int {
  booing = 0,
  stomping = 1,
  cheering = 2,
  clapping = 3,
  moving = 4,
  active = 5,
  quiet = 6,
};

inline constexpr int kNumClasses = 7;

const std::array<std::string, kNumClasses>& class_names();
BehaviorClass class_from_name(const std::string& name);

struct LabeledClip {
  dsp::Spectrogram spectrogram;  // fine-tune shape, typically 128x32
  BehaviorClass label = BehaviorClass::quiet;
  int minute_index = 0;
  std::string venue_id;
};

// Uniform seeded subset of floor(keep_ratio * n) token indices, sorted.
// keep_ratio == 1 keeps everything.
std::vector<int> patch_drop(int n_patches, double keep_ratio,
                            std::uint64_t seed);

// -log p[label], with p clamped at 1e-12.
double ce_loss(const std::vector<double>& distribution, int label);

// Softmax distribution over the 7 classes for one spectrogram.
std::vector<double> classify(const model::ModelParams& params,
                             const dsp::Spectrogram& spec, int patch_h,
                             int patch_w, double keep_ratio = 1.0,
                             std::uint64_t drop_seed = 0);

struct FinetuneOptions {
  train::Schedule schedule;     // head learning rate
  double encoder_lr_mult = 0.1; // encoder trains 10x slower than the head
  bool freeze_encoder = false;
  int batch_size = 8;
  double keep_ratio = 1.0;
  int patch_h = 4;
  int patch_w = 4;
  std::uint64_t seed = 0;
  bool allow_missing_classes = false;
  bool class_weights = false;   // inverse-frequency weighting
};

struct EpochMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<std::array<int, kNumClasses>, kNumClasses> confusion{};  // [true][pred]

  std::string to_json() const;
};

struct FinetuneResult {
  model::ModelParams params;  // encoder + head (+ untouched decoder)
  std::vector<EpochMetrics> history;
};

// Supervised fine-tuning of a pretrained encoder plus linear head.
// Decoder tensors are excluded from the optimizer and left bit-identical.
FinetuneResult finetune(const model::ModelParams& pretrained,
                        const std::vector<LabeledClip>& train_set,
                        const FinetuneOptions& options);

Metrics evaluate(const model::ModelParams& params,
                 const std::vector<LabeledClip>& eval_set,
                 const FinetuneOptions& options);

// CSV rows: minute_index, venue_id, predicted_class, p0..p6, true_class
std::string predictions_csv(const model::ModelParams& params,
                            const std::vector<LabeledClip>& eval_set,
                            const FinetuneOptions& options);

}  // namespace vila::finetune
