#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vila/finetune.hpp"
#include "vila/rng.hpp"
#include "vila/synthetic.hpp"

using namespace vila;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.embed_dim = 32;
  cfg.n_layers_enc = 2;
  cfg.n_layers_dec = 1;
  cfg.n_heads = 4;
  cfg.mlp_ratio = 2.0;
  cfg.patch_dim = 16;
  cfg.max_patches = 512;
  cfg.seed = 3;
  return cfg;
}

dsp::Spectrogram random_spec(int n_frames, int n_mels, std::uint64_t seed) {
  dsp::Spectrogram s;
  s.config.n_frames = n_frames;
  s.config.n_mels = n_mels;
  s.values.resize(n_frames, n_mels);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values(i) = rng.uniform();
  return s;
}

std::vector<finetune::LabeledClip> tiny_labeled_set(int n, std::uint64_t seed) {
  std::vector<finetune::LabeledClip> out;
  for (int i = 0; i < n; ++i) {
    finetune::LabeledClip clip;
    const int label = i % finetune::kNumClasses;
    clip.spectrogram = random_spec(32, 16, seed + i);
    // class-dependent mel band so a small model can actually separate them
    clip.spectrogram.values.col(label * 2).array() += 1.0;
    clip.label = static_cast<finetune::BehaviorClass>(label);
    clip.minute_index = i;
    clip.venue_id = "venue-a";
    out.push_back(std::move(clip));
  }
  return out;
}

}  // namespace

TEST_CASE("class names round-trip through the enum") {
  const auto& names = finetune::class_names();
  REQUIRE(names.size() == 7);
  CHECK(names[0] == "booing");
  CHECK(names[6] == "quiet");
  for (int i = 0; i < finetune::kNumClasses; ++i) {
    CHECK(static_cast<int>(finetune::class_from_name(names[i])) == i);
  }
  CHECK_THROWS_AS(finetune::class_from_name("yodeling"), std::invalid_argument);
}

TEST_CASE("patch_drop keeps exactly floor(keep * n) sorted unique indices") {
  const auto kept = finetune::patch_drop(128, 0.75, 4);
  CHECK(kept.size() == 96);
  CHECK(std::is_sorted(kept.begin(), kept.end()));
  CHECK(std::adjacent_find(kept.begin(), kept.end()) == kept.end());
  CHECK(kept.front() >= 0);
  CHECK(kept.back() < 128);

  const auto more = finetune::patch_drop(256, 0.5, 4);
  CHECK(more.size() == 128);

  // keep_ratio 1 is the identity
  const auto all = finetune::patch_drop(64, 1.0, 9);
  REQUIRE(all.size() == 64);
  for (int i = 0; i < 64; ++i) CHECK(all[i] == i);

  // deterministic in the seed
  CHECK(finetune::patch_drop(128, 0.75, 4) == kept);
  CHECK(finetune::patch_drop(128, 0.75, 5) != kept);
}

TEST_CASE("ce_loss closed forms") {
  const std::vector<double> uniform(7, 1.0 / 7.0);
  CHECK(finetune::ce_loss(uniform, 3) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));

  std::vector<double> half(7, 0.1);
  half[2] = 0.5;  // not a simplex but ce only reads one coordinate
  CHECK(finetune::ce_loss(half, 2) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<double> zero(7, 0.0);
  zero[0] = 1.0;
  CHECK(finetune::ce_loss(zero, 0) == doctest::Approx(0.0));
  // clamped, not infinite
  CHECK(finetune::ce_loss(zero, 1) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("classify returns a probability simplex") {
  auto params = model::ModelParams::init(tiny_config());
  params.attach_head();
  const auto spec = random_spec(32, 16, 11);
  const auto p = finetune::classify(params, spec, 4, 4);
  REQUIRE(p.size() == 7);
  double sum = 0.0;
  for (double v : p) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // deterministic
  CHECK(finetune::classify(params, spec, 4, 4) == p);

  // patch drop changes the prediction but stays a simplex
  const auto q = finetune::classify(params, spec, 4, 4, 0.5, 3);
  CHECK(q != p);
  CHECK(std::accumulate(q.begin(), q.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a zero-weight head predicts uniform") {
  auto params = model::ModelParams::init(tiny_config());
  params.attach_head();
  params.at("head.w")->val.setZero();
  params.at("head.b")->val.setZero();
  const auto p = finetune::classify(params, random_spec(32, 16, 12), 4, 4);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("finetune overfits a tiny balanced set") {
  auto pretrained = model::ModelParams::init(tiny_config());
  const auto train_set = tiny_labeled_set(14, 100);

  finetune::FinetuneOptions opt;
  opt.schedule.base_lr = 3e-2;
  opt.schedule.total_steps = 120;
  opt.batch_size = 7;
  opt.seed = 5;
  const auto result = finetune::finetune(pretrained, train_set, opt);
  REQUIRE(!result.history.empty());
  CHECK(result.history.back().loss < 0.5 * result.history.front().loss);

  const auto metrics = finetune::evaluate(result.params, train_set, opt);
  CHECK(metrics.accuracy > 0.5);  // memorizing 14 items
}

TEST_CASE("finetune leaves the decoder bit-identical") {
  auto pretrained = model::ModelParams::init(tiny_config());
  const auto train_set = tiny_labeled_set(7, 200);

  finetune::FinetuneOptions opt;
  opt.schedule.base_lr = 1e-3;
  opt.schedule.total_steps = 20;
  opt.batch_size = 7;
  opt.seed = 1;
  const auto result = finetune::finetune(pretrained, train_set, opt);

  int decoder_tensors = 0;
  int moved_encoder_tensors = 0;
  for (const auto& [name, t] : result.params.tensors) {
    if (name.starts_with("dec.")) {
      ++decoder_tensors;
      CHECK((t->val - pretrained.at(name)->val).cwiseAbs().maxCoeff() == 0.0);
    } else if (name.starts_with("enc.") || name.starts_with("patch_proj.")) {
      if ((t->val - pretrained.at(name)->val).cwiseAbs().maxCoeff() > 0.0) {
        ++moved_encoder_tensors;
      }
    }
  }
  CHECK(decoder_tensors > 0);
  CHECK(moved_encoder_tensors > 0);
}

TEST_CASE("freeze_encoder pins everything but the head") {
  auto pretrained = model::ModelParams::init(tiny_config());
  const auto train_set = tiny_labeled_set(7, 300);

  finetune::FinetuneOptions opt;
  opt.schedule.base_lr = 1e-3;
  opt.schedule.total_steps = 10;
  opt.batch_size = 7;
  opt.freeze_encoder = true;
  const auto result = finetune::finetune(pretrained, train_set, opt);
  for (const auto& [name, t] : result.params.tensors) {
    if (name.starts_with("head.")) continue;
    CHECK((t->val - pretrained.at(name)->val).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(result.params.has("head.w"));
}

TEST_CASE("finetune is reproducible from the seed") {
  auto pretrained = model::ModelParams::init(tiny_config());
  const auto train_set = tiny_labeled_set(14, 400);

  finetune::FinetuneOptions opt;
  opt.schedule.base_lr = 1e-3;
  opt.schedule.total_steps = 12;
  opt.batch_size = 7;
  opt.seed = 9;
  const auto a = finetune::finetune(pretrained, train_set, opt);
  const auto b = finetune::finetune(pretrained, train_set, opt);
  for (const auto& [name, t] : a.params.tensors) {
    CHECK((t->val - b.params.at(name)->val).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("missing classes are rejected unless allowed") {
  auto pretrained = model::ModelParams::init(tiny_config());
  auto train_set = tiny_labeled_set(14, 500);
  for (auto& clip : train_set) clip.label = finetune::BehaviorClass::quiet;

  finetune::FinetuneOptions opt;
  opt.schedule.base_lr = 1e-3;
  opt.schedule.total_steps = 4;
  opt.batch_size = 7;
  CHECK_THROWS_AS(finetune::finetune(pretrained, train_set, opt),
                  std::invalid_argument);
  opt.allow_missing_classes = true;
  CHECK_NOTHROW(finetune::finetune(pretrained, train_set, opt));
  CHECK_THROWS_AS(finetune::finetune(pretrained, {}, opt),
                  std::invalid_argument);
}

TEST_CASE("shape mismatch with pretraining is rejected") {
  auto pretrained = model::ModelParams::init(tiny_config());
  auto train_set = tiny_labeled_set(7, 600);

  finetune::FinetuneOptions opt;
  opt.schedule.total_steps = 2;
  opt.patch_h = 8;  // 8x8 patch -> patch_dim 64 != pretrained 16
  opt.patch_w = 8;
  for (auto& clip : train_set) clip.spectrogram = random_spec(32, 32, 1);
  CHECK_THROWS_WITH_AS(finetune::finetune(pretrained, train_set, opt),
                       "incompatible pretraining", std::invalid_argument);
}

TEST_CASE("evaluate metrics are internally consistent") {
  auto params = model::ModelParams::init(tiny_config());
  params.attach_head();
  const auto eval_set = tiny_labeled_set(21, 700);

  finetune::FinetuneOptions opt;
  const auto m = finetune::evaluate(params, eval_set, opt);

  int total = 0;
  int diag = 0;
  for (int i = 0; i < finetune::kNumClasses; ++i) {
    for (int j = 0; j < finetune::kNumClasses; ++j) total += m.confusion[i][j];
    diag += m.confusion[i][i];
  }
  CHECK(total == 21);
  CHECK(m.accuracy == doctest::Approx(diag / 21.0).epsilon(1e-12));
  for (int i = 0; i < finetune::kNumClasses; ++i) {
    CHECK(m.precision[i] >= 0.0);
    CHECK(m.precision[i] <= 1.0);
    CHECK(m.recall[i] >= 0.0);
    CHECK(m.recall[i] <= 1.0);
  }
  const auto js = m.to_json();
  CHECK(js.find("accuracy") != std::string::npos);
  CHECK(js.find("confusion") != std::string::npos);
}

TEST_CASE("predictions CSV has one row per item with a full distribution") {
  auto params = model::ModelParams::init(tiny_config());
  params.attach_head();
  const auto eval_set = tiny_labeled_set(5, 800);

  finetune::FinetuneOptions opt;
  const auto csv = finetune::predictions_csv(params, eval_set, opt);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 6);  // header + 5 rows
  CHECK(csv.starts_with("minute_index,venue_id,predicted_class,"));
  CHECK(csv.find("venue-a") != std::string::npos);
}
