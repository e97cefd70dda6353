#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vila/model.hpp"

namespace vila::train {

struct Schedule {
  double base_lr = 1e-3;
  int total_steps = 1000;
  bool cosine = true;

  double lr_at(int step) const;
};

// AdamW over a named subset of the model tensors. Per-tensor learning-rate
// multipliers support the fine-tuning split (head at full rate, encoder at
// a tenth).
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 1e-4)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void include(const std::string& name, const ad::Var& tensor,
               double lr_mult = 1.0);
  void step(double lr);
  int steps_taken() const { return t_; }

 private:
  struct Slot {
    ad::Var tensor;
    double lr_mult;
    ad::Matrix m, v;
  };
  std::map<std::string, Slot> slots_;
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
};

struct TrainState {
  model::ModelParams params;
  AdamW opt;
  Schedule schedule;
  int step = 0;
  std::uint64_t seed = 0;
  double mask_ratio = 0.8;
  bool full_grid_loss = false;
};

struct PretrainResult {
  model::ModelParams params;
  std::vector<double> losses;  // one per step
};

struct PretrainOptions {
  model::ModelConfig model;
  Schedule schedule;
  int batch_size = 4;
  double mask_ratio = 0.8;
  int patch_h = 4;
  int patch_w = 4;
  bool full_grid_loss = false;
  std::uint64_t seed = 0;
  std::function<void(int, double)> on_step;  // optional progress hook
};

// One optimizer step over a fixed batch of patch grids. Mask plans are
// derived from (seed, step, position-in-batch). Returns the batch loss.
double train_step(TrainState& state,
                  const std::vector<const patching::PatchGrid*>& batch);

// Masked-autoencoder pretraining over a uniform-shape spectrogram corpus.
PretrainResult pretrain(const std::vector<dsp::Spectrogram>& corpus,
                        const PretrainOptions& options);

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<double>& losses);

}  // namespace vila::train
