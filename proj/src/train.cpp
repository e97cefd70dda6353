#include "vila/train.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "vila/io.hpp"
#include "vila/rng.hpp"

namespace vila::train {

double Schedule::lr_at(int step) const {
  if (!cosine || total_steps <= 1) return base_lr;
  const double frac =
      std::min(1.0, static_cast<double>(step) / (total_steps - 1));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void AdamW::include(const std::string& name, const ad::Var& tensor,
                    double lr_mult) {
  Slot slot;
  slot.tensor = tensor;
  slot.lr_mult = lr_mult;
  slot.m = ad::Matrix::Zero(tensor->val.rows(), tensor->val.cols());
  slot.v = ad::Matrix::Zero(tensor->val.rows(), tensor->val.cols());
  slots_[name] = std::move(slot);
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (auto& [name, slot] : slots_) {
    const ad::Matrix& g = slot.tensor->grad;
    slot.m = beta1_ * slot.m + (1.0 - beta1_) * g;
    slot.v = beta2_ * slot.v + (1.0 - beta2_) * g.cwiseProduct(g);
    const double step_lr = lr * slot.lr_mult;
    slot.tensor->val.array() -=
        step_lr * ((slot.m.array() / bc1) /
                       ((slot.v.array() / bc2).sqrt() + eps_) +
                   weight_decay_ * slot.tensor->val.array());
  }
}

double train_step(TrainState& state,
                  const std::vector<const patching::PatchGrid*>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  state.params.zero_grad();

  ad::Var total;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const patching::PatchGrid& grid = *batch[i];
    const auto plan_seed = derive_seed(
        state.seed, "mask",
        static_cast<std::uint64_t>(state.step) * 8191u + i);
    const auto plan =
        patching::make_mask(grid.n_patches(), state.mask_ratio, plan_seed);
    ad::Var loss =
        model::forward_loss(state.params, grid, plan, state.full_grid_loss);
    loss = ad::scale(loss, inv_b);
    total = total ? ad::add(total, loss) : loss;
  }
  const double loss_value = total->val(0, 0);
  if (!std::isfinite(loss_value)) {
    throw std::runtime_error("diverged at step " + std::to_string(state.step));
  }
  ad::backward(total);
  state.opt.step(state.schedule.lr_at(state.step));
  ++state.step;
  return loss_value;
}

PretrainResult pretrain(const std::vector<dsp::Spectrogram>& corpus,
                        const PretrainOptions& options) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  for (const auto& s : corpus) {
    if (s.n_frames() != corpus[0].n_frames() ||
        s.n_mels() != corpus[0].n_mels()) {
      throw std::invalid_argument("mixed spectrogram shapes in corpus");
    }
  }

  std::vector<patching::PatchGrid> grids;
  grids.reserve(corpus.size());
  for (const auto& s : corpus) {
    grids.push_back(patching::patchify(s, options.patch_h, options.patch_w));
  }

  model::ModelConfig cfg = options.model;
  cfg.patch_dim = options.patch_h * options.patch_w;
  cfg.max_patches = std::max(cfg.max_patches, grids[0].n_patches());
  cfg.seed = derive_seed(options.seed, "model");

  TrainState state;
  state.params = model::ModelParams::init(cfg);
  state.schedule = options.schedule;
  state.seed = derive_seed(options.seed, "pretrain");
  state.mask_ratio = options.mask_ratio;
  state.full_grid_loss = options.full_grid_loss;
  for (const auto& [name, t] : state.params.tensors) {
    state.opt.include(name, t);
  }

  Rng batch_rng(derive_seed(options.seed, "batches"));
  PretrainResult result;
  result.losses.reserve(options.schedule.total_steps);
  for (int step = 0; step < options.schedule.total_steps; ++step) {
    std::vector<const patching::PatchGrid*> batch;
    batch.reserve(options.batch_size);
    for (int b = 0; b < options.batch_size; ++b) {
      batch.push_back(&grids[batch_rng.bounded(grids.size())]);
    }
    const double loss = train_step(state, batch);
    result.losses.push_back(loss);
    if (options.on_step) options.on_step(step, loss);
  }
  result.params = std::move(state.params);
  return result;
}

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<double>& losses) {
  std::ostringstream ss;
  ss << "step,loss\n";
  ss.precision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    ss << i << "," << losses[i] << "\n";
  }
  io::write_text_file(path, ss.str());
}

}  // namespace vila::train
