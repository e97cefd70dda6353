#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "vila/io.hpp"

using namespace vila;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli() {
  const char* path = std::getenv("VILA_CLI");
  REQUIRE(path != nullptr);
  return path;
}

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "vila_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
  const auto log = work_dir() / "last_run.log";
  const std::string cmd = cli() + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.output = io::read_text_file(log);
  return r;
}

void write_tiny_config(const fs::path& path) {
  io::write_text_file(path,
                      "seed = 3\n"
                      "[model]\n"
                      "embed_dim = 16\n"
                      "n_layers_enc = 1\n"
                      "n_layers_dec = 1\n"
                      "n_heads = 4\n"
                      "[pretrain]\n"
                      "steps = 4\n"
                      "batch = 2\n"
                      "lr = 0.001\n"
                      "[finetune]\n"
                      "steps = 4\n"
                      "batch = 7\n"
                      "lr = 0.01\n");
}

json read_run_manifest(const fs::path& dir) {
  return json::parse(io::read_text_file(dir / "run-manifest.json"));
}

std::string output_checksum(const json& manifest, const std::string& suffix) {
  for (const auto& out : manifest.at("outputs")) {
    const std::string path = out.at("path");
    if (path.ends_with(suffix)) return out.at("checksum");
  }
  FAIL("no output ending in ", suffix);
  return {};
}

// shared tiny benchmark; generated once for the whole suite
fs::path bench_dir() {
  static const fs::path dir = [] {
    const auto d = work_dir() / "bench";
    const auto r = run("gen-synthetic --out " + d.string() +
                       " --seed 5 --n-pretrain 7 --n-labeled 7");
    REQUIRE(r.exit_code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("gen-synthetic writes a complete indexed corpus") {
  const auto dir = bench_dir();
  CHECK(fs::exists(dir / "index.json"));
  CHECK(fs::exists(dir / "run-manifest.json"));

  const auto manifest = read_run_manifest(dir);
  CHECK(manifest.at("errors").empty());
  CHECK(manifest.at("command") == "gen-synthetic");
  // 7 pretrain + 7 train + 21 eval + index.json
  CHECK(manifest.at("outputs").size() == 36);
  // every listed checksum matches the file on disk
  for (const auto& out : manifest.at("outputs")) {
    CHECK(io::file_checksum(out.at("path").get<std::string>()) ==
          out.at("checksum").get<std::string>());
  }
}

TEST_CASE("pretrain twice with one seed gives identical checkpoints") {
  const auto cfg = work_dir() / "tiny.toml";
  write_tiny_config(cfg);
  const std::string base = "pretrain --data " + (bench_dir() / "index.json").string() +
                           " --config " + cfg.string() + " --out ";
  const auto a = work_dir() / "pre_a";
  const auto b = work_dir() / "pre_b";
  REQUIRE(run(base + a.string()).exit_code == 0);
  REQUIRE(run(base + b.string()).exit_code == 0);
  CHECK(io::read_file(a / "checkpoint.mae") == io::read_file(b / "checkpoint.mae"));
  CHECK(output_checksum(read_run_manifest(a), "checkpoint.mae") ==
        output_checksum(read_run_manifest(b), "checkpoint.mae"));

  // a different seed changes the checkpoint
  const auto c = work_dir() / "pre_c";
  REQUIRE(run(base + c.string() + " --seed 99").exit_code == 0);
  CHECK(io::read_file(a / "checkpoint.mae") != io::read_file(c / "checkpoint.mae"));
}

TEST_CASE("finetune and evaluate close the loop") {
  const auto cfg = work_dir() / "tiny.toml";
  write_tiny_config(cfg);
  const auto pre = work_dir() / "pre_a";  // from the previous case
  REQUIRE(fs::exists(pre / "checkpoint.mae"));

  const auto ft = work_dir() / "ft";
  const auto r1 = run("finetune --data " + (bench_dir() / "index.json").string() +
                      " --checkpoint " + (pre / "checkpoint.mae").string() +
                      " --config " + cfg.string() + " --out " + ft.string());
  CHECK(r1.exit_code == 0);
  CHECK(fs::exists(ft / "finetuned.mae"));
  CHECK(fs::exists(ft / "history.csv"));

  const auto ev = work_dir() / "ev";
  const auto r2 = run("evaluate --data " + (bench_dir() / "index.json").string() +
                      " --checkpoint " + (ft / "finetuned.mae").string() +
                      " --config " + cfg.string() + " --out " + ev.string());
  CHECK(r2.exit_code == 0);
  const auto metrics = json::parse(io::read_text_file(ev / "metrics.json"));
  REQUIRE(metrics.at("checkpoints").size() == 1);
  const double acc = metrics.at("checkpoints")[0].at("accuracy");
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(fs::exists(ev / "predictions_0.csv"));
}

TEST_CASE("finetune without a checkpoint source is a usage error") {
  const auto r = run("finetune --data " + (bench_dir() / "index.json").string() +
                     " --out " + (work_dir() / "ft_err").string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("--checkpoint or --from-scratch") != std::string::npos);
}

TEST_CASE("preprocess converts WAVs, reports corrupt ones, and is idempotent") {
  const auto raw = work_dir() / "raw";
  fs::create_directories(raw);
  dsp::RawClip clip;
  clip.sample_rate_hz = 1000;
  clip.samples.resize(60000);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] =
        0.5 * std::sin(2.0 * std::numbers::pi * 137.0 * i / 1000.0);
  }
  io::write_wav_f32(raw / "a.wav", clip);
  for (auto& s : clip.samples) s *= 0.7;
  io::write_wav_f32(raw / "b.wav", clip);
  io::write_text_file(raw / "corrupt.wav", "garbage, not a wav");

  json m;
  m["version"] = "vila-manifest/1";
  for (const char* name : {"a.wav", "b.wav", "corrupt.wav"}) {
    m["entries"].push_back({{"path", (raw / name).string()},
                            {"modality", "audio"},
                            {"split", "pretrain"}});
  }
  io::write_text_file(raw / "manifest.json", m.dump(2));

  const auto s1 = work_dir() / "store1";
  const auto r1 = run("preprocess --manifest " + (raw / "manifest.json").string() +
                      " --out " + s1.string() + " --jobs 2");
  CHECK(r1.exit_code == 1);  // corrupt entry fails
  const auto manifest = read_run_manifest(s1);
  REQUIRE(manifest.at("errors").size() == 1);
  CHECK(manifest.at("errors")[0].at("context").get<std::string>().ends_with(
      "corrupt.wav"));

  // the two good files made it into the index
  const auto index = json::parse(io::read_text_file(s1 / "index.json"));
  CHECK(index.at("entries").size() == 2);

  // re-run into a fresh store: bit-identical SPEC1 files
  const auto s2 = work_dir() / "store2";
  run("preprocess --manifest " + (raw / "manifest.json").string() + " --out " +
      s2.string());
  for (const auto& entry : index.at("entries")) {
    const fs::path p1 = entry.at("path").get<std::string>();
    const fs::path p2 = s2 / p1.filename();
    CHECK(io::read_file(p1) == io::read_file(p2));
  }
}

TEST_CASE("config errors carry line and key diagnostics") {
  const auto bad = work_dir() / "bad.toml";
  io::write_text_file(bad, "[model]\nembed_dim = 16\nwarp_factor = 2\n");
  const auto r = run("pretrain --data " + (bench_dir() / "index.json").string() +
                     " --config " + bad.string() + " --out " +
                     (work_dir() / "cfg_err").string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("line 3") != std::string::npos);
  CHECK(r.output.find("model.warp_factor") != std::string::npos);

  const auto bad2 = work_dir() / "bad2.toml";
  io::write_text_file(bad2, "[pretrain]\nsteps = soon\n");
  const auto r2 = run("pretrain --data " + (bench_dir() / "index.json").string() +
                      " --config " + bad2.string() + " --out " +
                      (work_dir() / "cfg_err2").string());
  CHECK(r2.exit_code == 1);
  CHECK(r2.output.find("line 2") != std::string::npos);
}

TEST_CASE("indicators and sort produce balanced groups") {
  const auto cfg = work_dir() / "tiny.toml";
  write_tiny_config(cfg);
  const auto pre = work_dir() / "pre_a";
  REQUIRE(fs::exists(pre / "checkpoint.mae"));

  const auto ind = work_dir() / "ind";
  const auto r1 = run("indicators --data " + (bench_dir() / "index.json").string() +
                      " --split train --other " +
                      (bench_dir() / "index.json").string() +
                      " --other-split eval --checkpoint " +
                      (pre / "checkpoint.mae").string() + " --config " +
                      cfg.string() + " --out " + ind.string());
  CHECK(r1.exit_code == 0);
  const auto report = json::parse(io::read_text_file(ind / "report.json"));
  CHECK(report.at("per_item").size() == 7);

  const auto sorted = work_dir() / "sorted";
  const auto r2 = run("sort --report " + (ind / "report.json").string() +
                      " --by similarity --k 3 --out " + sorted.string());
  CHECK(r2.exit_code == 0);
  const auto groups = json::parse(io::read_text_file(sorted / "groups.json"));
  REQUIRE(groups.at("groups").size() == 3);
  CHECK(groups.at("groups")[0].size() == 3);  // 7 = 3 + 2 + 2
  CHECK(groups.at("groups")[1].size() == 2);
  CHECK(groups.at("groups")[2].size() == 2);

  // nested needs >= 9 items; with 7 it must fail cleanly
  const auto r3 = run("sort --report " + (ind / "report.json").string() +
                      " --nested --out " + (work_dir() / "nested").string());
  CHECK(r3.exit_code == 1);
  CHECK(r3.output.find("at least 9") != std::string::npos);
}

TEST_CASE("run manifests record command, seed, and config") {
  const auto manifest = read_run_manifest(bench_dir());
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.contains("git"));
  CHECK(manifest.at("config").contains("model"));
}
