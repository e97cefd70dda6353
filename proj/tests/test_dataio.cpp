#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "vila/dataio.hpp"
#include "vila/indicators.hpp"
#include "vila/io.hpp"
#include "vila/rng.hpp"
#include "vila/synthetic.hpp"

using namespace vila;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("modality and split names round trip") {
  for (auto m : {dataio::Modality::audio, dataio::Modality::vibration,
                 dataio::Modality::image, dataio::Modality::video}) {
    CHECK(dataio::modality_from_name(dataio::modality_name(m)) == m);
  }
  for (auto s : {dataio::Split::pretrain, dataio::Split::train,
                 dataio::Split::eval}) {
    CHECK(dataio::split_from_name(dataio::split_name(s)) == s);
  }
  CHECK_THROWS_AS(dataio::modality_from_name("hologram"),
                  std::invalid_argument);
  CHECK_THROWS_AS(dataio::split_from_name("test"), std::invalid_argument);
}

TEST_CASE("manifest JSON round trip preserves every field") {
  dataio::Manifest m;
  dataio::ManifestEntry a;
  a.path = "clips/a.wav";
  a.modality = dataio::Modality::audio;
  a.sample_rate_hz = 1000;
  a.split = dataio::Split::pretrain;
  dataio::ManifestEntry b;
  b.path = "clips/b.spec1";
  b.modality = dataio::Modality::vibration;
  b.label = finetune::BehaviorClass::cheering;
  b.minute_index = 17;
  b.venue_id = "arena-3";
  b.split = dataio::Split::train;
  m.entries = {a, b};

  const auto text = m.to_json();
  CHECK(text.find("vila-manifest/1") != std::string::npos);
  const auto back = dataio::Manifest::from_json(text);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0] == a);
  CHECK(back.entries[1] == b);
}

TEST_CASE("manifest validation catches duplicates and bad versions") {
  dataio::Manifest m;
  dataio::ManifestEntry e;
  e.path = "x.wav";
  m.entries = {e, e};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  CHECK_THROWS_AS(dataio::Manifest::from_json(R"({"version":"vila-manifest/9","entries":[]})"),
                  std::runtime_error);
  CHECK_THROWS_AS(dataio::Manifest::from_json("not json at all"),
                  std::exception);
}

TEST_CASE("frame stack loads sorted PGM frames with an fps sidecar") {
  const auto dir = temp_dir("vila_frames");
  Rng rng(1);
  std::vector<Eigen::MatrixXd> frames;
  for (int t = 0; t < 3; ++t) {
    Eigen::MatrixXd f(6, 5);
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = rng.uniform();
    frames.push_back(f);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.pgm", t);
    io::write_pgm(dir / name, f);
  }
  io::write_text_file(dir / "fps", "30\n");

  const auto stack = dataio::load_frame_stack(dir);
  CHECK(stack.fps == 30.0);
  REQUIRE(stack.frames.size() == 3);
  CHECK(stack.height() == 6);
  CHECK(stack.width() == 5);
  for (int t = 0; t < 3; ++t) {
    // PGM is 8-bit, so round-tripping quantizes to 1/255 steps
    CHECK((stack.frames[t] - frames[t]).cwiseAbs().maxCoeff() < 1.0 / 255.0);
  }

  fs::remove(dir / "fps");
  CHECK_THROWS_AS(dataio::load_frame_stack(dir), std::runtime_error);
}

TEST_CASE("strip_wise extracts one column per frame") {
  dataio::FrameStack stack;
  stack.fps = 10.0;
  for (int t = 0; t < 4; ++t) {
    Eigen::MatrixXd f(3, 5);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 5; ++c) f(r, c) = 100.0 * t + 10.0 * r + c;
    }
    stack.frames.push_back(f);
  }

  const auto strip = dataio::strip_wise(stack, 2);
  REQUIRE(strip.rows() == 4);
  REQUIRE(strip.cols() == 3);
  for (int t = 0; t < 4; ++t) {
    for (int r = 0; r < 3; ++r) {
      CHECK(strip(t, r) == 100.0 * t + 10.0 * r + 2.0);
    }
  }
  CHECK_THROWS_AS(dataio::strip_wise(stack, 5), std::invalid_argument);
  CHECK_THROWS_AS(dataio::strip_wise(stack, -1), std::invalid_argument);
}

TEST_CASE("pixel_wise samples exactly the requested pixels") {
  dataio::FrameStack stack;
  stack.fps = 10.0;
  for (int t = 0; t < 3; ++t) {
    Eigen::MatrixXd f(4, 4);
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = t * 16.0 + i;
    stack.frames.push_back(f);
  }
  const std::vector<std::pair<int, int>> pixels = {{0, 0}, {3, 3}, {1, 2}};
  const auto traces = dataio::pixel_wise(stack, pixels);
  REQUIRE(traces.rows() == 3);
  REQUIRE(traces.cols() == 3);
  for (int t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < pixels.size(); ++j) {
      CHECK(traces(t, static_cast<int>(j)) ==
            stack.frames[t](pixels[j].first, pixels[j].second));
    }
  }
  CHECK_THROWS_AS(dataio::pixel_wise(stack, {{4, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(dataio::pixel_wise(stack, {}), std::invalid_argument);
}

TEST_CASE("events CSV parses and rejects malformed rows") {
  const auto dir = temp_dir("vila_events");
  io::write_text_file(dir / "ok.csv",
                      "minute_index,sensor_id,behavior\n"
                      "0,s1,cheering\n"
                      "0,s2,clapping\n"
                      "2,s1,booing\n");
  const auto events = dataio::read_events_csv(dir / "ok.csv");
  REQUIRE(events.size() == 3);
  CHECK(events[0].minute_index == 0);
  CHECK(events[0].sensor_id == "s1");
  CHECK(events[0].behavior == finetune::BehaviorClass::cheering);
  CHECK(events[2].behavior == finetune::BehaviorClass::booing);

  io::write_text_file(dir / "bad_header.csv", "minute,sensor,behavior\n");
  CHECK_THROWS_AS(dataio::read_events_csv(dir / "bad_header.csv"),
                  std::runtime_error);
  io::write_text_file(dir / "bad_class.csv",
                      "minute_index,sensor_id,behavior\n0,s1,yelling\n");
  CHECK_THROWS_AS(dataio::read_events_csv(dir / "bad_class.csv"),
                  std::exception);
}

TEST_CASE("priority labeling picks the highest-priority behavior") {
  using BC = finetune::BehaviorClass;
  std::vector<dataio::BehaviorEvent> events = {
      {0, "s1", BC::cheering}, {0, "s2", BC::clapping},
      {1, "s1", BC::moving},   {1, "s2", BC::booing},
      {1, "s3", BC::active}};
  CHECK(dataio::priority_label(events, 0) == BC::cheering);
  CHECK(dataio::priority_label(events, 1) == BC::booing);
  CHECK(dataio::priority_label(events, 5) == BC::quiet);  // empty minute
}

TEST_CASE("priority labeling over every behavior subset") {
  using BC = finetune::BehaviorClass;
  // for each nonempty subset of the 7 classes, the label is the minimum
  // enum value, regardless of event order
  for (int mask = 1; mask < (1 << 7); ++mask) {
    std::vector<dataio::BehaviorEvent> events;
    int expected = 7;
    for (int c = 0; c < 7; ++c) {
      if (mask & (1 << c)) {
        events.push_back({3, "s", static_cast<BC>(c)});
        expected = std::min(expected, c);
      }
    }
    Rng rng(static_cast<std::uint64_t>(mask));
    rng.shuffle(events);
    CHECK(static_cast<int>(dataio::priority_label(events, 3)) == expected);
  }
}

TEST_CASE("synthetic generation is seed-deterministic") {
  const auto a = synthetic::gen_spectrogram(finetune::BehaviorClass::stomping,
                                            synthetic::SynthModality::vibration,
                                            42);
  const auto b = synthetic::gen_spectrogram(finetune::BehaviorClass::stomping,
                                            synthetic::SynthModality::vibration,
                                            42);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
  const auto c = synthetic::gen_spectrogram(finetune::BehaviorClass::stomping,
                                            synthetic::SynthModality::vibration,
                                            43);
  CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("synthetic modalities differ in frame count and content") {
  const auto vib = synthetic::gen_spectrogram(
      finetune::BehaviorClass::clapping, synthetic::SynthModality::vibration, 7);
  const auto aud = synthetic::gen_spectrogram(
      finetune::BehaviorClass::clapping, synthetic::SynthModality::audio, 7);
  CHECK(vib.n_frames() == 128);
  CHECK(aud.n_frames() == 256);
  CHECK(vib.n_mels() == 32);
  CHECK(aud.n_mels() == 32);
  // normalized range
  for (const auto* s : {&vib, &aud}) {
    CHECK(s->values.minCoeff() >= 0.0);
    CHECK(s->values.maxCoeff() <= 1.0);
  }
}

TEST_CASE("class templates are mutually distinguishable") {
  // noise-free templates of different classes should not be near-identical,
  // otherwise the classification task is unlearnable
  std::vector<dsp::Spectrogram> templates;
  for (int c = 0; c < finetune::kNumClasses; ++c) {
    templates.push_back(
        synthetic::class_template(static_cast<finetune::BehaviorClass>(c)));
  }
  for (int i = 0; i < finetune::kNumClasses; ++i) {
    for (int j = i + 1; j < finetune::kNumClasses; ++j) {
      CHECK(indicators::similarity(templates[i], templates[j]) < 0.9);
    }
  }
}

TEST_CASE("per-bin time means do not separate the classes linearly") {
  // nearest-centroid on time-averaged mel bins is the cheap shortcut the
  // generator is designed to deny; it must stay well under good accuracy
  const int per_class = 12;
  std::vector<Eigen::VectorXd> feats;
  std::vector<int> labels;
  for (int c = 0; c < finetune::kNumClasses; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const auto s = synthetic::gen_spectrogram(
          static_cast<finetune::BehaviorClass>(c),
          synthetic::SynthModality::vibration,
          vila::derive_seed(900, "probe", c * 100 + i));
      feats.push_back(s.values.colwise().mean().transpose());
      labels.push_back(c);
    }
  }
  // centroid per class from the first half, evaluate on the second half
  std::vector<Eigen::VectorXd> centroids(finetune::kNumClasses,
                                         Eigen::VectorXd::Zero(32));
  std::vector<int> counts(finetune::kNumClasses, 0);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (static_cast<int>(i) % per_class < per_class / 2) {
      centroids[labels[i]] += feats[i];
      ++counts[labels[i]];
    }
  }
  for (int c = 0; c < finetune::kNumClasses; ++c) centroids[c] /= counts[c];
  int correct = 0, total = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (static_cast<int>(i) % per_class < per_class / 2) continue;
    int best = 0;
    double best_d = (feats[i] - centroids[0]).squaredNorm();
    for (int c = 1; c < finetune::kNumClasses; ++c) {
      const double d = (feats[i] - centroids[c]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += (best == labels[i]) ? 1 : 0;
    ++total;
  }
  const double acc = static_cast<double>(correct) / total;
  CHECK(acc < 0.6);
}

TEST_CASE("corpus generation is balanced and reproducible") {
  const auto corpus = synthetic::gen_synthetic_corpus(11, 14, 14);
  CHECK(corpus.pretrain.size() == 14);
  CHECK(corpus.train.size() == 14);
  CHECK(corpus.eval.size() == 42);

  std::array<int, finetune::kNumClasses> train_counts{};
  for (const auto& clip : corpus.train) {
    ++train_counts[static_cast<int>(clip.label)];
  }
  for (int c = 0; c < finetune::kNumClasses; ++c) CHECK(train_counts[c] == 2);

  const auto again = synthetic::gen_synthetic_corpus(11, 14, 14);
  CHECK((corpus.pretrain[0].values - again.pretrain[0].values)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((corpus.eval[5].spectrogram.values - again.eval[5].spectrogram.values)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}
