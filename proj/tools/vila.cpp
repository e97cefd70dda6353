// vila: deterministic pipeline driver for spectrogram pretraining,
// fine-tuning, and data-selection indicators.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vila/config.hpp"
#include "vila/dataio.hpp"
#include "vila/finetune.hpp"
#include "vila/indicators.hpp"
#include "vila/io.hpp"
#include "vila/model.hpp"
#include "vila/rng.hpp"
#include "vila/synthetic.hpp"
#include "vila/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vila;

namespace {

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {};
  std::string out;
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) {
    out.pop_back();
  }
  return out.empty() ? "unknown" : out;
}

// Accumulates everything a command produced; serialized at the end so the
// manifest always reflects the real outcome, including partial failures.
struct RunRecorder {
  std::string command;
  config::RunConfig cfg;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // path, checksum
  std::vector<std::pair<std::string, std::string>> errors;   // context, message
  std::mutex mu;

  void add_output(const fs::path& path) {
    std::lock_guard lock(mu);
    outputs.emplace_back(path.string(), io::file_checksum(path));
  }
  void add_error(const std::string& context, const std::string& message) {
    std::lock_guard lock(mu);
    errors.emplace_back(context, message);
    std::fprintf(stderr, "error: %s: %s\n", context.c_str(), message.c_str());
  }

  // returns the process exit code: 0 iff no entry-level failures
  int finish(const fs::path& out_dir) {
    json j;
    j["command"] = command;
    j["seed"] = seed;
    j["git"] = git_describe();
    j["config"] = json::parse(cfg.to_json());
    for (const auto& [path, checksum] : outputs) {
      j["outputs"].push_back({{"path", path}, {"checksum", checksum}});
    }
    j["errors"] = json::array();
    for (const auto& [context, message] : errors) {
      j["errors"].push_back({{"context", context}, {"message", message}});
    }
    io::write_text_file(out_dir / "run-manifest.json", j.dump(2) + "\n");
    return errors.empty() ? 0 : 1;
  }
};

fs::path default_store() {
  if (const char* cache = std::getenv("VILA_CACHE")) return fs::path(cache);
  return fs::path("spec-store");
}

config::RunConfig load_cfg(const std::string& config_path) {
  if (config_path.empty()) return {};
  return config::load_config(config_path);
}

dsp::Spectrogram load_entry_spectrogram(const dataio::ManifestEntry& entry,
                                        const config::RunConfig& cfg) {
  const fs::path path = entry.path;
  const auto ext = path.extension().string();
  if (ext == ".spec1") return io::read_spec1(path);

  dsp::RawClip clip;
  if (ext == ".wav") {
    clip = io::read_wav(path);
  } else if (ext == ".csv") {
    clip = io::read_sample_csv(path);
  } else if (fs::is_directory(path)) {
    // video frame stack -> strip-wise time image, stored like a spectrogram
    const auto stack = dataio::load_frame_stack(path);
    dsp::Spectrogram s;
    s.values = dataio::strip_wise(stack, stack.width() / 2);
    s.config.n_frames = static_cast<int>(s.values.rows());
    s.config.n_mels = static_cast<int>(s.values.cols());
    s.source_id = path.filename().string();
    return dsp::normalize(s);
  } else {
    throw std::runtime_error("unsupported input type: " + ext);
  }
  if (entry.sample_rate_hz && *entry.sample_rate_hz != clip.sample_rate_hz) {
    throw std::runtime_error("sample rate does not match manifest");
  }
  if (clip.sample_rate_hz != cfg.dsp.target_rate_hz) {
    clip = dsp::resample(clip, cfg.dsp.target_rate_hz);
  }
  return dsp::normalize(dsp::to_spectrogram(clip, cfg.dsp));
}

std::vector<finetune::LabeledClip> load_labeled(const dataio::Manifest& index,
                                                dataio::Split split) {
  std::vector<finetune::LabeledClip> out;
  for (const auto& entry : index.entries) {
    if (entry.split != split) continue;
    if (!entry.label) {
      throw std::runtime_error("entry missing label: " + entry.path);
    }
    finetune::LabeledClip clip;
    clip.spectrogram = io::read_spec1(entry.path);
    clip.label = *entry.label;
    clip.minute_index = entry.minute_index.value_or(0);
    clip.venue_id = entry.venue_id.value_or("");
    out.push_back(std::move(clip));
  }
  return out;
}

std::vector<dsp::Spectrogram> load_split(const dataio::Manifest& index,
                                         dataio::Split split) {
  std::vector<dsp::Spectrogram> out;
  for (const auto& entry : index.entries) {
    if (entry.split == split) out.push_back(io::read_spec1(entry.path));
  }
  return out;
}

dataio::Manifest read_index(const fs::path& path) {
  auto index = dataio::Manifest::from_json(io::read_text_file(path));
  index.validate();
  return index;
}

// ---------------------------------------------------------------- preprocess

int cmd_preprocess(const std::string& manifest_path,
                   const std::string& config_path, const fs::path& out_dir,
                   int jobs, std::uint64_t seed, bool seed_set) {
  RunRecorder rec;
  rec.command = "preprocess";
  rec.cfg = load_cfg(config_path);
  if (seed_set) rec.cfg.seed = seed;
  rec.seed = rec.cfg.seed;
  fs::create_directories(out_dir);

  dataio::Manifest input;
  try {
    input = read_index(manifest_path);
  } catch (const std::exception& e) {
    rec.add_error(manifest_path, e.what());
    return rec.finish(out_dir);
  }

  dataio::Manifest index;
  index.entries.resize(input.entries.size());
  std::vector<bool> ok(input.entries.size(), false);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= input.entries.size()) return;
      const auto& entry = input.entries[i];
      try {
        auto spec = load_entry_spectrogram(entry, rec.cfg);
        char name[64];
        std::snprintf(name, sizeof(name), "item_%05zu.spec1", i);
        const fs::path dest = out_dir / name;
        io::write_spec1(dest, spec);
        auto converted = entry;
        converted.path = dest.string();
        converted.sample_rate_hz.reset();
        index.entries[i] = converted;
        ok[i] = true;
        rec.add_output(dest);
      } catch (const std::exception& e) {
        rec.add_error(entry.path, e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, jobs); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  dataio::Manifest final_index;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    if (ok[i]) final_index.entries.push_back(index.entries[i]);
  }
  io::write_text_file(out_dir / "index.json", final_index.to_json() + "\n");
  rec.add_output(out_dir / "index.json");
  return rec.finish(out_dir);
}

// -------------------------------------------------------------- gen-synthetic

int cmd_gen_synthetic(const fs::path& out_dir, std::uint64_t seed,
                      int n_pretrain, int n_labeled) {
  RunRecorder rec;
  rec.command = "gen-synthetic";
  rec.seed = seed;
  fs::create_directories(out_dir);
  try {
    const auto corpus = synthetic::gen_synthetic_corpus(seed, n_pretrain,
                                                        n_labeled);
    dataio::Manifest index;
    auto store = [&](const dsp::Spectrogram& spec, const std::string& name,
                     dataio::Modality modality, dataio::Split split,
                     const finetune::LabeledClip* labeled) {
      const fs::path dest = out_dir / name;
      io::write_spec1(dest, spec);
      rec.add_output(dest);
      dataio::ManifestEntry entry;
      entry.path = dest.string();
      entry.modality = modality;
      entry.split = split;
      if (labeled) {
        entry.label = labeled->label;
        entry.minute_index = labeled->minute_index;
        entry.venue_id = labeled->venue_id;
      }
      index.entries.push_back(std::move(entry));
    };
    char name[64];
    for (std::size_t i = 0; i < corpus.pretrain.size(); ++i) {
      std::snprintf(name, sizeof(name), "pretrain_%05zu.spec1", i);
      store(corpus.pretrain[i], name, dataio::Modality::audio,
            dataio::Split::pretrain, nullptr);
    }
    for (std::size_t i = 0; i < corpus.train.size(); ++i) {
      std::snprintf(name, sizeof(name), "train_%05zu.spec1", i);
      store(corpus.train[i].spectrogram, name, dataio::Modality::vibration,
            dataio::Split::train, &corpus.train[i]);
    }
    for (std::size_t i = 0; i < corpus.eval.size(); ++i) {
      std::snprintf(name, sizeof(name), "eval_%05zu.spec1", i);
      store(corpus.eval[i].spectrogram, name, dataio::Modality::vibration,
            dataio::Split::eval, &corpus.eval[i]);
    }
    io::write_text_file(out_dir / "index.json", index.to_json() + "\n");
    rec.add_output(out_dir / "index.json");
  } catch (const std::exception& e) {
    rec.add_error("gen-synthetic", e.what());
  }
  return rec.finish(out_dir);
}

// ------------------------------------------------------------------ pretrain

int cmd_pretrain(const std::string& data_path, const std::string& config_path,
                 const fs::path& out_dir, std::uint64_t seed, bool seed_set) {
  RunRecorder rec;
  rec.command = "pretrain";
  fs::create_directories(out_dir);
  try {
    rec.cfg = load_cfg(config_path);
    if (seed_set) rec.cfg.seed = seed;
    rec.seed = rec.cfg.seed;

    const auto corpus =
        load_split(read_index(data_path), dataio::Split::pretrain);
    train::PretrainOptions opt;
    opt.model = rec.cfg.model;
    opt.schedule.base_lr = rec.cfg.pretrain_lr;
    opt.schedule.total_steps = rec.cfg.pretrain_steps;
    opt.schedule.cosine = rec.cfg.pretrain_cosine;
    opt.batch_size = rec.cfg.pretrain_batch;
    opt.mask_ratio = rec.cfg.mask_ratio;
    opt.patch_h = rec.cfg.patch_h;
    opt.patch_w = rec.cfg.patch_w;
    opt.full_grid_loss = rec.cfg.full_grid_loss;
    opt.seed = rec.cfg.seed;

    const auto result = train::pretrain(corpus, opt);
    result.params.save(out_dir / "checkpoint.mae");
    train::write_loss_csv(out_dir / "loss.csv", result.losses);
    rec.add_output(out_dir / "checkpoint.mae");
    rec.add_output(out_dir / "loss.csv");
  } catch (const std::exception& e) {
    rec.add_error("pretrain", e.what());
  }
  return rec.finish(out_dir);
}

// ------------------------------------------------------------------ finetune

finetune::FinetuneOptions finetune_options(const config::RunConfig& cfg) {
  finetune::FinetuneOptions opt;
  opt.schedule.base_lr = cfg.finetune_lr;
  opt.schedule.total_steps = cfg.finetune_steps;
  opt.schedule.cosine = cfg.finetune_cosine;
  opt.encoder_lr_mult = cfg.encoder_lr_mult;
  opt.freeze_encoder = cfg.freeze_encoder;
  opt.batch_size = cfg.finetune_batch;
  opt.keep_ratio = cfg.keep_ratio;
  opt.patch_h = cfg.patch_h;
  opt.patch_w = cfg.patch_w;
  opt.seed = cfg.seed;
  opt.allow_missing_classes = cfg.allow_missing_classes;
  opt.class_weights = cfg.class_weights;
  return opt;
}

int cmd_finetune(const std::string& data_path, const std::string& checkpoint,
                 const std::string& config_path, const fs::path& out_dir,
                 std::uint64_t seed, bool seed_set, bool from_scratch) {
  RunRecorder rec;
  rec.command = "finetune";
  fs::create_directories(out_dir);
  try {
    rec.cfg = load_cfg(config_path);
    if (seed_set) rec.cfg.seed = seed;
    rec.seed = rec.cfg.seed;

    const auto train_set =
        load_labeled(read_index(data_path), dataio::Split::train);
    model::ModelParams base;
    if (from_scratch) {
      model::ModelConfig mc = rec.cfg.model;
      mc.patch_dim = rec.cfg.patch_h * rec.cfg.patch_w;
      mc.seed = derive_seed(rec.cfg.seed, "scratch-init");
      base = model::ModelParams::init(mc);
    } else {
      base = model::ModelParams::load(checkpoint);
    }

    const auto opt = finetune_options(rec.cfg);
    const auto result = finetune::finetune(base, train_set, opt);
    result.params.save(out_dir / "finetuned.mae");
    rec.add_output(out_dir / "finetuned.mae");

    std::string history = "epoch,loss,accuracy\n";
    for (std::size_t e = 0; e < result.history.size(); ++e) {
      history += std::to_string(e) + "," +
                 std::to_string(result.history[e].loss) + "," +
                 std::to_string(result.history[e].accuracy) + "\n";
    }
    io::write_text_file(out_dir / "history.csv", history);
    rec.add_output(out_dir / "history.csv");
  } catch (const std::exception& e) {
    rec.add_error("finetune", e.what());
  }
  return rec.finish(out_dir);
}

// ------------------------------------------------------------------ evaluate

int cmd_evaluate(const std::string& data_path,
                 const std::vector<std::string>& checkpoints,
                 const std::string& config_path, const fs::path& out_dir,
                 std::uint64_t seed, bool seed_set) {
  RunRecorder rec;
  rec.command = "evaluate";
  fs::create_directories(out_dir);
  try {
    rec.cfg = load_cfg(config_path);
    if (seed_set) rec.cfg.seed = seed;
    rec.seed = rec.cfg.seed;

    const auto eval_set =
        load_labeled(read_index(data_path), dataio::Split::eval);
    const auto opt = finetune_options(rec.cfg);

    json report;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      const auto params = model::ModelParams::load(checkpoints[c]);
      const auto metrics = finetune::evaluate(params, eval_set, opt);
      report["checkpoints"].push_back(
          {{"path", checkpoints[c]},
           {"accuracy", metrics.accuracy},
           {"metrics", json::parse(metrics.to_json())}});
      char name[64];
      std::snprintf(name, sizeof(name), "predictions_%zu.csv", c);
      io::write_text_file(out_dir / name,
                          finetune::predictions_csv(params, eval_set, opt));
      rec.add_output(out_dir / name);
    }
    io::write_text_file(out_dir / "metrics.json", report.dump(2) + "\n");
    rec.add_output(out_dir / "metrics.json");
  } catch (const std::exception& e) {
    rec.add_error("evaluate", e.what());
  }
  return rec.finish(out_dir);
}

// ---------------------------------------------------------------- indicators

int cmd_indicators(const std::string& data_path, const std::string& split,
                   const std::string& other_path,
                   const std::string& other_split,
                   const std::string& checkpoint,
                   const std::string& config_path, const fs::path& out_dir,
                   std::uint64_t seed, bool seed_set) {
  RunRecorder rec;
  rec.command = "indicators";
  fs::create_directories(out_dir);
  try {
    rec.cfg = load_cfg(config_path);
    if (seed_set) rec.cfg.seed = seed;
    rec.seed = rec.cfg.seed;

    const auto want = dataio::split_from_name(split);
    const auto index = read_index(data_path);
    std::vector<dsp::Spectrogram> items;
    std::vector<std::string> ids;
    for (const auto& entry : index.entries) {
      if (entry.split != want) continue;
      items.push_back(io::read_spec1(entry.path));
      ids.push_back(fs::path(entry.path).filename().string());
    }
    if (items.empty()) throw std::runtime_error("no entries in split");

    std::vector<dsp::Spectrogram> other;
    if (!other_path.empty()) {
      const auto other_want = dataio::split_from_name(other_split);
      for (const auto& entry : read_index(other_path).entries) {
        if (entry.split == other_want) {
          other.push_back(io::read_spec1(entry.path));
        }
      }
    }

    std::optional<model::ModelParams> params;
    if (!checkpoint.empty()) params = model::ModelParams::load(checkpoint);

    const indicators::SsimParams ssim;
    Rng rng(derive_seed(rec.cfg.seed, "indicators"));
    std::vector<indicators::ItemScore> scores;
    for (std::size_t i = 0; i < items.size(); ++i) {
      indicators::ItemScore score;
      score.source_id = ids[i];
      if (!other.empty()) {
        // per-item similarity against a bounded random draw from the
        // reference set
        const int draws = std::min<int>(
            static_cast<int>(other.size()),
            std::max(1, rec.cfg.ssim_pairs /
                            std::max<int>(1, static_cast<int>(items.size()))));
        double acc = 0.0;
        for (int d = 0; d < draws; ++d) {
          acc += indicators::similarity(items[i],
                                        other[rng.bounded(other.size())], ssim);
        }
        score.similarity = acc / draws;
      }
      if (params) {
        const auto grid =
            patching::patchify(items[i], rec.cfg.patch_h, rec.cfg.patch_w);
        const auto plan = patching::make_mask(
            grid.n_patches(), rec.cfg.mask_ratio,
            derive_seed(rec.cfg.seed, "indicator-mask", i));
        const auto recon = model::reconstruct(*params, grid, plan);
        score.diversity = indicators::image_mse(
            items[i], patching::unpatchify(recon));
      }
      scores.push_back(std::move(score));
    }
    const auto report = indicators::make_report(
        fs::path(data_path).parent_path().filename().string(), scores);
    io::write_text_file(out_dir / "report.json", report.to_json() + "\n");
    io::write_text_file(out_dir / "report.csv", report.to_csv());
    rec.add_output(out_dir / "report.json");
    rec.add_output(out_dir / "report.csv");
  } catch (const std::exception& e) {
    rec.add_error("indicators", e.what());
  }
  return rec.finish(out_dir);
}

// ---------------------------------------------------------------------- sort

int cmd_sort(const std::string& report_path, const std::string& by, int k,
             bool nested, const fs::path& out_dir) {
  RunRecorder rec;
  rec.command = "sort";
  fs::create_directories(out_dir);
  try {
    const auto doc = json::parse(io::read_text_file(report_path));
    std::vector<indicators::ItemScore> items;
    for (const auto& row : doc.at("per_item")) {
      items.push_back({row.at("source_id").get<std::string>(),
                       row.at("similarity").get<double>(),
                       row.at("diversity").get<double>()});
    }
    std::vector<std::vector<indicators::ItemScore>> groups;
    if (nested) {
      groups = indicators::sort_nested(std::move(items));
    } else {
      const auto key = by == "diversity" ? indicators::SortKey::diversity
                                         : indicators::SortKey::similarity;
      groups = indicators::sort_into_groups(std::move(items), key, k);
    }
    json out;
    out["by"] = nested ? "nested" : by;
    for (const auto& group : groups) {
      json g = json::array();
      for (const auto& item : group) g.push_back(item.source_id);
      out["groups"].push_back(std::move(g));
    }
    io::write_text_file(out_dir / "groups.json", out.dump(2) + "\n");
    rec.add_output(out_dir / "groups.json");
  } catch (const std::exception& e) {
    rec.add_error("sort", e.what());
  }
  return rec.finish(out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectrogram pretraining and fine-tuning pipeline"};
  app.require_subcommand(1);

  std::string manifest, data, other, config_path, checkpoint, report, by =
      "similarity";
  std::vector<std::string> checkpoints;
  std::string out = default_store().string();
  std::uint64_t seed = 0;
  int jobs = 1, k = 3, n_pretrain = 2000, n_labeled = 70;
  bool nested = false, from_scratch = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "TOML run configuration");
    cmd->add_option("--out", out, "output directory");
    return cmd->add_option("--seed", seed, "master seed override");
  };

  auto* pre = app.add_subcommand("preprocess", "convert raw inputs to SPEC1");
  pre->add_option("--manifest", manifest, "input manifest JSON")->required();
  pre->add_option("--jobs", jobs, "parallel workers");
  auto* pre_seed = add_common(pre);

  auto* gen = app.add_subcommand("gen-synthetic", "write synthetic benchmark");
  gen->add_option("--out", out, "output directory");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--n-pretrain", n_pretrain, "pretraining items");
  gen->add_option("--n-labeled", n_labeled, "labeled training items");

  auto* pt = app.add_subcommand("pretrain", "masked-autoencoder pretraining");
  pt->add_option("--data", data, "index JSON from preprocess/gen-synthetic")
      ->required();
  auto* pt_seed = add_common(pt);

  auto* ft = app.add_subcommand("finetune", "supervised fine-tuning");
  ft->add_option("--data", data, "index JSON with a train split")->required();
  ft->add_option("--checkpoint", checkpoint, "pretrained checkpoint");
  ft->add_flag("--from-scratch", from_scratch,
               "random initialization instead of a checkpoint");
  auto* ft_seed = add_common(ft);

  auto* ev = app.add_subcommand("evaluate", "accuracy report on an eval split");
  ev->add_option("--data", data, "index JSON with an eval split")->required();
  ev->add_option("--checkpoint", checkpoints, "checkpoints to compare")
      ->required();
  auto* ev_seed = add_common(ev);

  auto* ind = app.add_subcommand("indicators",
                                 "similarity/diversity per-item report");
  std::string split = "train", other_split = "train";
  ind->add_option("--data", data, "index JSON to score")->required();
  ind->add_option("--split", split, "split of --data to score");
  ind->add_option("--other", other, "reference index for similarity");
  ind->add_option("--other-split", other_split, "split of --other to draw from");
  ind->add_option("--checkpoint", checkpoint, "model for diversity");
  auto* ind_seed = add_common(ind);

  auto* sort_cmd = app.add_subcommand("sort", "partition a report into groups");
  sort_cmd->add_option("--report", report, "report.json from indicators")
      ->required();
  sort_cmd->add_option("--by", by, "similarity or diversity");
  sort_cmd->add_option("--k", k, "group count");
  sort_cmd->add_flag("--nested", nested, "3x3 nested tertiles");
  sort_cmd->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      return cmd_preprocess(manifest, config_path, out, jobs, seed,
                            !pre_seed->empty());
    }
    if (gen->parsed()) {
      return cmd_gen_synthetic(out, seed, n_pretrain, n_labeled);
    }
    if (pt->parsed()) {
      return cmd_pretrain(data, config_path, out, seed, !pt_seed->empty());
    }
    if (ft->parsed()) {
      if (checkpoint.empty() && !from_scratch) {
        std::fprintf(stderr,
                     "error: finetune needs --checkpoint or --from-scratch\n");
        return 2;
      }
      return cmd_finetune(data, checkpoint, config_path, out, seed,
                          !ft_seed->empty(), from_scratch);
    }
    if (ev->parsed()) {
      return cmd_evaluate(data, checkpoints, config_path, out, seed,
                          !ev_seed->empty());
    }
    if (ind->parsed()) {
      return cmd_indicators(data, split, other, other_split, checkpoint,
                            config_path, out, seed, !ind_seed->empty());
    }
    if (sort_cmd->parsed()) return cmd_sort(report, by, k, nested, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
