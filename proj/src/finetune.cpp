#include "vila/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vila/rng.hpp"

namespace vila::finetune {

const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names = {
      "booing", "stomping", "cheering", "clapping",
      "moving", "active",   "quiet"};
  return names;
}

BehaviorClass class_from_name(const std::string& name) {
  const auto& names = class_names();
  for (int i = 0; i < kNumClasses; ++i) {
    if (names[i] == name) return static_cast<BehaviorClass>(i);
  }
  throw std::invalid_argument("unknown behavior class: " + name);
}

std::vector<int> patch_drop(int n_patches, double keep_ratio,
                            std::uint64_t seed) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw std::invalid_argument("keep ratio must be in (0,1]");
  }
  std::vector<int> order(n_patches);
  std::iota(order.begin(), order.end(), 0);
  if (keep_ratio >= 1.0) return order;
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(static_cast<std::size_t>(keep_ratio * n_patches));
  std::sort(order.begin(), order.end());
  return order;
}

double ce_loss(const std::vector<double>& distribution, int label) {
  if (label < 0 || label >= static_cast<int>(distribution.size())) {
    throw std::invalid_argument("label out of range");
  }
  return -std::log(std::max(distribution[label], 1e-12));
}

namespace {

// patch-drop "plan": kept tokens count as visible so encode() reuses the
// visible-only path
patching::MaskPlan keep_plan(int n_patches, const std::vector<int>& kept) {
  patching::MaskPlan plan;
  plan.visible.assign(n_patches, false);
  for (int i : kept) plan.visible.at(i) = true;
  plan.mask_ratio =
      1.0 - static_cast<double>(kept.size()) / std::max(1, n_patches);
  return plan;
}

ad::Var clip_logits(const model::ModelParams& params,
                    const patching::PatchGrid& grid, double keep_ratio,
                    std::uint64_t drop_seed) {
  const auto kept = patch_drop(grid.n_patches(), keep_ratio, drop_seed);
  const auto plan = keep_plan(grid.n_patches(), kept);
  ad::Var tokens = model::encode(params, grid, plan);
  return model::head_logits(params, tokens);
}

std::vector<double> softmax_row(const ad::Matrix& logits) {
  const double m = logits.row(0).maxCoeff();
  std::vector<double> p(static_cast<std::size_t>(logits.cols()));
  double z = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(logits(0, i) - m);
    z += p[static_cast<std::size_t>(i)];
  }
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

std::vector<double> classify(const model::ModelParams& params,
                             const dsp::Spectrogram& spec, int patch_h,
                             int patch_w, double keep_ratio,
                             std::uint64_t drop_seed) {
  const auto grid = patching::patchify(spec, patch_h, patch_w);
  const ad::Var logits = clip_logits(params, grid, keep_ratio, drop_seed);
  return softmax_row(logits->val);
}

FinetuneResult finetune(const model::ModelParams& pretrained,
                        const std::vector<LabeledClip>& train_set,
                        const FinetuneOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  const int nf = train_set[0].spectrogram.n_frames();
  const int nm = train_set[0].spectrogram.n_mels();
  for (const auto& clip : train_set) {
    if (clip.spectrogram.n_frames() != nf || clip.spectrogram.n_mels() != nm) {
      throw std::invalid_argument("mixed spectrogram shapes in training set");
    }
  }
  if (nf % options.patch_h != 0 || nm % options.patch_w != 0 ||
      options.patch_h * options.patch_w != pretrained.config.patch_dim) {
    throw std::invalid_argument("incompatible pretraining");
  }
  std::array<int, kNumClasses> class_counts{};
  for (const auto& clip : train_set) {
    ++class_counts[static_cast<int>(clip.label)];
  }
  if (!options.allow_missing_classes) {
    for (int c = 0; c < kNumClasses; ++c) {
      if (class_counts[c] == 0) {
        throw std::invalid_argument("class missing from training set: " +
                                    class_names()[c]);
      }
    }
  }
  std::array<double, kNumClasses> class_weight;
  class_weight.fill(1.0);
  if (options.class_weights) {
    for (int c = 0; c < kNumClasses; ++c) {
      class_weight[c] = class_counts[c] > 0
                            ? static_cast<double>(train_set.size()) /
                                  (kNumClasses * class_counts[c])
                            : 0.0;
    }
  }

  FinetuneResult result;
  result.params.config = pretrained.config;
  for (const auto& [name, t] : pretrained.tensors) {
    result.params.tensors[name] = ad::parameter(t->val);
  }
  result.params.attach_head();

  train::AdamW opt;
  for (const auto& [name, t] : result.params.tensors) {
    if (name.rfind("dec.", 0) == 0) continue;  // decoder stays untouched
    if (name.rfind("head.", 0) == 0) {
      opt.include(name, t, 1.0);
    } else if (!options.freeze_encoder) {
      opt.include(name, t, options.encoder_lr_mult);
    }
  }

  std::vector<patching::PatchGrid> grids;
  grids.reserve(train_set.size());
  for (const auto& clip : train_set) {
    grids.push_back(patching::patchify(clip.spectrogram, options.patch_h,
                                       options.patch_w));
  }

  Rng batch_rng(derive_seed(options.seed, "finetune-batches"));
  const int steps_per_epoch = std::max<int>(
      1, static_cast<int>(train_set.size()) / options.batch_size);
  const int n_epochs =
      std::max(1, options.schedule.total_steps / steps_per_epoch);

  int step = 0;
  for (int epoch = 0; epoch < n_epochs && step < options.schedule.total_steps;
       ++epoch) {
    double epoch_loss = 0.0;
    int correct = 0, seen = 0;
    for (int s = 0; s < steps_per_epoch && step < options.schedule.total_steps;
         ++s, ++step) {
      result.params.zero_grad();
      ad::Var total;
      for (int b = 0; b < options.batch_size; ++b) {
        const auto i = batch_rng.bounded(grids.size());
        const auto drop_seed = derive_seed(
            options.seed, "patch-drop",
            static_cast<std::uint64_t>(step) * 8191u + b);
        ad::Var logits = clip_logits(result.params, grids[i],
                                     options.keep_ratio, drop_seed);
        const int label = static_cast<int>(train_set[i].label);
        ad::Var loss = ad::ce_with_logits(logits, label);
        loss = ad::scale(loss, class_weight[label] /
                                   static_cast<double>(options.batch_size));
        total = total ? ad::add(total, loss) : loss;

        Eigen::Index argmax;
        logits->val.row(0).maxCoeff(&argmax);
        correct += (static_cast<int>(argmax) == label) ? 1 : 0;
        ++seen;
      }
      const double loss_value = total->val(0, 0);
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("diverged at step " + std::to_string(step));
      }
      ad::backward(total);
      opt.step(options.schedule.lr_at(step));
      epoch_loss += loss_value;
    }
    EpochMetrics em;
    em.loss = epoch_loss / steps_per_epoch;
    em.accuracy = seen > 0 ? static_cast<double>(correct) / seen : 0.0;
    result.history.push_back(em);
  }
  return result;
}

Metrics evaluate(const model::ModelParams& params,
                 const std::vector<LabeledClip>& eval_set,
                 const FinetuneOptions& options) {
  Metrics m;
  int correct = 0;
  for (const auto& clip : eval_set) {
    const auto p = classify(params, clip.spectrogram, options.patch_h,
                            options.patch_w, 1.0, 0);
    const int pred = static_cast<int>(
        std::max_element(p.begin(), p.end()) - p.begin());
    const int truth = static_cast<int>(clip.label);
    ++m.confusion[truth][pred];
    if (pred == truth) ++correct;
  }
  m.accuracy = eval_set.empty()
                   ? 0.0
                   : static_cast<double>(correct) / eval_set.size();
  for (int c = 0; c < kNumClasses; ++c) {
    int pred_total = 0, true_total = 0;
    for (int t = 0; t < kNumClasses; ++t) {
      pred_total += m.confusion[t][c];
      true_total += m.confusion[c][t];
    }
    m.precision[c] =
        pred_total > 0 ? static_cast<double>(m.confusion[c][c]) / pred_total : 0.0;
    m.recall[c] =
        true_total > 0 ? static_cast<double>(m.confusion[c][c]) / true_total : 0.0;
  }
  return m;
}

std::string Metrics::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  for (int c = 0; c < kNumClasses; ++c) {
    j["per_class"][class_names()[c]] = {{"precision", precision[c]},
                                        {"recall", recall[c]}};
  }
  for (int t = 0; t < kNumClasses; ++t) {
    j["confusion"].push_back(confusion[t]);
  }
  return j.dump(2);
}

std::string predictions_csv(const model::ModelParams& params,
                            const std::vector<LabeledClip>& eval_set,
                            const FinetuneOptions& options) {
  std::ostringstream ss;
  ss << "minute_index,venue_id,predicted_class,p0,p1,p2,p3,p4,p5,p6,true_class\n";
  ss.precision(10);
  for (const auto& clip : eval_set) {
    const auto p = classify(params, clip.spectrogram, options.patch_h,
                            options.patch_w, 1.0, 0);
    const int pred = static_cast<int>(
        std::max_element(p.begin(), p.end()) - p.begin());
    ss << clip.minute_index << "," << clip.venue_id << ","
       << class_names()[pred];
    for (double v : p) ss << "," << v;
    ss << "," << class_names()[static_cast<int>(clip.label)] << "\n";
  }
  return ss.str();
}

}  // namespace vila::finetune
