#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vila/dsp.hpp"

namespace vila::patching {

// Row-major (time-major) sequence of flattened patch_h x patch_w tiles.
struct PatchGrid {
  Eigen::MatrixXd patches;  // n_patches x (patch_h*patch_w), row-major tiles
  int rows = 0;             // n_frames / patch_h
  int cols = 0;             // n_mels / patch_w
  int patch_h = 0;
  int patch_w = 0;

  int n_patches() const { return rows * cols; }
  int patch_dim() const { return patch_h * patch_w; }
};

struct MaskPlan {
  std::vector<bool> visible;  // per patch
  double mask_ratio = 0.0;
  std::uint64_t seed = 0;

  int n_patches() const { return static_cast<int>(visible.size()); }
  int n_visible() const;
  int n_masked() const { return n_patches() - n_visible(); }
  std::vector<int> visible_indices() const;
  std::vector<int> masked_indices() const;

  std::string to_json() const;
  static MaskPlan from_json(const std::string& text);
};

PatchGrid patchify(const dsp::Spectrogram& spec, int patch_h, int patch_w);
dsp::Spectrogram unpatchify(const PatchGrid& grid);

// Exactly floor(mask_ratio * n_patches) masked, chosen uniformly without
// replacement by a Fisher-Yates shuffle over mt19937_64(seed).
MaskPlan make_mask(int n_patches, double mask_ratio, std::uint64_t seed);

}  // namespace vila::patching
