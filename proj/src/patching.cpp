#include "vila/patching.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vila/rng.hpp"

namespace vila::patching {

int MaskPlan::n_visible() const {
  return static_cast<int>(std::count(visible.begin(), visible.end(), true));
}

std::vector<int> MaskPlan::visible_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n_patches(); ++i) {
    if (visible[i]) idx.push_back(i);
  }
  return idx;
}

std::vector<int> MaskPlan::masked_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n_patches(); ++i) {
    if (!visible[i]) idx.push_back(i);
  }
  return idx;
}

std::string MaskPlan::to_json() const {
  nlohmann::json j;
  j["n_patches"] = n_patches();
  j["mask_ratio"] = mask_ratio;
  j["seed"] = seed;
  j["masked_indices"] = masked_indices();
  return j.dump(2);
}

MaskPlan MaskPlan::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MaskPlan plan;
  plan.mask_ratio = j.at("mask_ratio").get<double>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.visible.assign(j.at("n_patches").get<int>(), true);
  for (int i : j.at("masked_indices").get<std::vector<int>>()) {
    plan.visible.at(i) = false;
  }
  return plan;
}

PatchGrid patchify(const dsp::Spectrogram& spec, int patch_h, int patch_w) {
  if (patch_h <= 0 || patch_w <= 0 || spec.n_frames() % patch_h != 0 ||
      spec.n_mels() % patch_w != 0) {
    throw std::invalid_argument("patch size mismatch");
  }
  PatchGrid grid;
  grid.patch_h = patch_h;
  grid.patch_w = patch_w;
  grid.rows = spec.n_frames() / patch_h;
  grid.cols = spec.n_mels() / patch_w;
  grid.patches.resize(grid.n_patches(), patch_h * patch_w);
  for (int pr = 0; pr < grid.rows; ++pr) {
    for (int pc = 0; pc < grid.cols; ++pc) {
      const int p = pr * grid.cols + pc;
      for (int i = 0; i < patch_h; ++i) {
        for (int j = 0; j < patch_w; ++j) {
          grid.patches(p, i * patch_w + j) =
              spec.values(pr * patch_h + i, pc * patch_w + j);
        }
      }
    }
  }
  return grid;
}

dsp::Spectrogram unpatchify(const PatchGrid& grid) {
  if (grid.rows <= 0 || grid.cols <= 0 ||
      grid.patches.rows() != grid.n_patches() ||
      grid.patches.cols() != grid.patch_dim()) {
    throw std::invalid_argument("inconsistent patch grid");
  }
  dsp::Spectrogram spec;
  spec.config.n_frames = grid.rows * grid.patch_h;
  spec.config.n_mels = grid.cols * grid.patch_w;
  spec.values.resize(spec.config.n_frames, spec.config.n_mels);
  for (int pr = 0; pr < grid.rows; ++pr) {
    for (int pc = 0; pc < grid.cols; ++pc) {
      const int p = pr * grid.cols + pc;
      for (int i = 0; i < grid.patch_h; ++i) {
        for (int j = 0; j < grid.patch_w; ++j) {
          spec.values(pr * grid.patch_h + i, pc * grid.patch_w + j) =
              grid.patches(p, i * grid.patch_w + j);
        }
      }
    }
  }
  return spec;
}

MaskPlan make_mask(int n_patches, double mask_ratio, std::uint64_t seed) {
  if (n_patches <= 0) throw std::invalid_argument("no patches");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw std::invalid_argument("mask ratio must be in (0,1)");
  }
  const int n_masked = static_cast<int>(mask_ratio * n_patches);

  std::vector<int> order(n_patches);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  MaskPlan plan;
  plan.mask_ratio = mask_ratio;
  plan.seed = seed;
  plan.visible.assign(n_patches, true);
  for (int i = 0; i < n_masked; ++i) plan.visible[order[i]] = false;
  return plan;
}

}  // namespace vila::patching
