#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vila/dsp.hpp"
#include "vila/model.hpp"
#include "vila/train.hpp"

namespace vila::config {

// Everything a pipeline command can be configured with. Flat TOML with
// [dsp] / [model] / [pretrain] / [finetune] / [indicators] sections;
// unknown sections or keys are rejected with a line diagnostic.
struct RunConfig {
  dsp::SpectrogramConfig dsp;
  model::ModelConfig model;

  // pretrain
  int pretrain_steps = 1000;
  int pretrain_batch = 4;
  double pretrain_lr = 1e-3;
  bool pretrain_cosine = true;
  double mask_ratio = 0.8;
  int patch_h = 4;
  int patch_w = 4;
  bool full_grid_loss = false;

  // finetune
  int finetune_steps = 200;
  int finetune_batch = 8;
  double finetune_lr = 1e-2;
  bool finetune_cosine = true;
  double encoder_lr_mult = 0.1;
  bool freeze_encoder = false;
  double keep_ratio = 1.0;
  bool class_weights = false;
  bool allow_missing_classes = false;

  // indicators
  int ssim_pairs = 10000;
  bool ssim_exhaustive = false;

  std::uint64_t seed = 0;

  std::string to_toml() const;
  std::string to_json() const;  // embedded in run manifests
};

RunConfig parse_toml(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace vila::config
