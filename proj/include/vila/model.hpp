#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vila/autodiff.hpp"
#include "vila/patching.hpp"

namespace vila::model {

struct ModelConfig {
  int embed_dim = 64;
  int n_layers_enc = 4;
  int n_layers_dec = 2;
  int n_heads = 4;
  double mlp_ratio = 2.0;
  int patch_dim = 16;  // patch_h * patch_w
  int max_patches = 512;
  int n_classes = 7;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Named tensor table. std::map keeps iteration order stable, which the
// optimizer and checkpoint writer rely on for determinism.
struct ModelParams {
  ModelConfig config;
  std::map<std::string, ad::Var> tensors;

  ad::Var at(const std::string& name) const;
  bool has(const std::string& name) const;
  void zero_grad();

  // truncated-normal(0.02) projections, zero biases, unit norm gains
  static ModelParams init(const ModelConfig& config);
  // adds head.w / head.b when the checkpoint was pretrain-only
  void attach_head();

  void save(const std::filesystem::path& path) const;
  static ModelParams load(const std::filesystem::path& path);
};

// Fixed 2-D sinusoidal positional encoding: first half of the embedding
// encodes the patch-row (time) index, second half the patch-col
// (frequency) index. dim must be divisible by 4.
ad::Matrix positional_encoding(int grid_rows, int grid_cols, int dim);

// Encoder over visible patches only. Returns n_visible x embed_dim tokens.
ad::Var encode(const ModelParams& params, const patching::PatchGrid& grid,
               const patching::MaskPlan& plan);

// Decoder over all positions; returns n_patches x patch_dim reconstruction.
ad::Var decode(const ModelParams& params, const ad::Var& encoded,
               const patching::MaskPlan& plan, int grid_rows, int grid_cols);

// Masked-cell MSE between reconstruction and the original grid. When
// full_grid is set the loss covers every patch instead.
ad::Var recon_loss_var(const ad::Var& recon, const patching::PatchGrid& original,
                       const patching::MaskPlan& plan, bool full_grid = false);

double recon_loss(const patching::PatchGrid& original,
                  const patching::PatchGrid& recon,
                  const patching::MaskPlan& plan, bool full_grid = false);

// encode -> decode -> masked MSE, as one differentiable graph.
ad::Var forward_loss(const ModelParams& params, const patching::PatchGrid& grid,
                     const patching::MaskPlan& plan, bool full_grid = false);

// Full reconstruction as a plain grid (no gradients).
patching::PatchGrid reconstruct(const ModelParams& params,
                                const patching::PatchGrid& grid,
                                const patching::MaskPlan& plan);

// Mean-pooled encoder tokens -> linear head logits (1 x n_classes).
ad::Var head_logits(const ModelParams& params, const ad::Var& tokens);

}  // namespace vila::model
