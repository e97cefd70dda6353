#include "vila/config.hpp"

#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vila/io.hpp"

namespace vila::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

struct Field {
  std::function<void(RunConfig&, const std::string&, int)> set;
};

int parse_int(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used != v.size()) fail(line, "expected integer, got '" + v + "'");
    return r;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    fail(line, "expected integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const auto r = std::stoull(v, &used);
    if (used != v.size()) fail(line, "expected integer, got '" + v + "'");
    return r;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    fail(line, "expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) fail(line, "expected number, got '" + v + "'");
    return r;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    fail(line, "expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(line, "expected true/false, got '" + v + "'");
}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> s = {
      {"dsp.target_rate_hz", {[](RunConfig& c, const std::string& v, int l) { c.dsp.target_rate_hz = parse_int(v, l); }}},
      {"dsp.n_mels", {[](RunConfig& c, const std::string& v, int l) { c.dsp.n_mels = parse_int(v, l); }}},
      {"dsp.n_frames", {[](RunConfig& c, const std::string& v, int l) { c.dsp.n_frames = parse_int(v, l); }}},
      {"dsp.fft_size", {[](RunConfig& c, const std::string& v, int l) { c.dsp.fft_size = parse_int(v, l); }}},
      {"dsp.hop", {[](RunConfig& c, const std::string& v, int l) { c.dsp.hop = parse_int(v, l); }}},
      {"dsp.log_floor", {[](RunConfig& c, const std::string& v, int l) { c.dsp.log_floor = parse_double(v, l); }}},
      {"model.embed_dim", {[](RunConfig& c, const std::string& v, int l) { c.model.embed_dim = parse_int(v, l); }}},
      {"model.n_layers_enc", {[](RunConfig& c, const std::string& v, int l) { c.model.n_layers_enc = parse_int(v, l); }}},
      {"model.n_layers_dec", {[](RunConfig& c, const std::string& v, int l) { c.model.n_layers_dec = parse_int(v, l); }}},
      {"model.n_heads", {[](RunConfig& c, const std::string& v, int l) { c.model.n_heads = parse_int(v, l); }}},
      {"model.mlp_ratio", {[](RunConfig& c, const std::string& v, int l) { c.model.mlp_ratio = parse_double(v, l); }}},
      {"model.max_patches", {[](RunConfig& c, const std::string& v, int l) { c.model.max_patches = parse_int(v, l); }}},
      {"pretrain.steps", {[](RunConfig& c, const std::string& v, int l) { c.pretrain_steps = parse_int(v, l); }}},
      {"pretrain.batch", {[](RunConfig& c, const std::string& v, int l) { c.pretrain_batch = parse_int(v, l); }}},
      {"pretrain.lr", {[](RunConfig& c, const std::string& v, int l) { c.pretrain_lr = parse_double(v, l); }}},
      {"pretrain.cosine", {[](RunConfig& c, const std::string& v, int l) { c.pretrain_cosine = parse_bool(v, l); }}},
      {"pretrain.mask_ratio", {[](RunConfig& c, const std::string& v, int l) { c.mask_ratio = parse_double(v, l); }}},
      {"pretrain.patch_h", {[](RunConfig& c, const std::string& v, int l) { c.patch_h = parse_int(v, l); }}},
      {"pretrain.patch_w", {[](RunConfig& c, const std::string& v, int l) { c.patch_w = parse_int(v, l); }}},
      {"pretrain.full_grid_loss", {[](RunConfig& c, const std::string& v, int l) { c.full_grid_loss = parse_bool(v, l); }}},
      {"finetune.steps", {[](RunConfig& c, const std::string& v, int l) { c.finetune_steps = parse_int(v, l); }}},
      {"finetune.batch", {[](RunConfig& c, const std::string& v, int l) { c.finetune_batch = parse_int(v, l); }}},
      {"finetune.lr", {[](RunConfig& c, const std::string& v, int l) { c.finetune_lr = parse_double(v, l); }}},
      {"finetune.cosine", {[](RunConfig& c, const std::string& v, int l) { c.finetune_cosine = parse_bool(v, l); }}},
      {"finetune.encoder_lr_mult", {[](RunConfig& c, const std::string& v, int l) { c.encoder_lr_mult = parse_double(v, l); }}},
      {"finetune.freeze_encoder", {[](RunConfig& c, const std::string& v, int l) { c.freeze_encoder = parse_bool(v, l); }}},
      {"finetune.keep_ratio", {[](RunConfig& c, const std::string& v, int l) { c.keep_ratio = parse_double(v, l); }}},
      {"finetune.class_weights", {[](RunConfig& c, const std::string& v, int l) { c.class_weights = parse_bool(v, l); }}},
      {"finetune.allow_missing_classes", {[](RunConfig& c, const std::string& v, int l) { c.allow_missing_classes = parse_bool(v, l); }}},
      {"indicators.ssim_pairs", {[](RunConfig& c, const std::string& v, int l) { c.ssim_pairs = parse_int(v, l); }}},
      {"indicators.ssim_exhaustive", {[](RunConfig& c, const std::string& v, int l) { c.ssim_exhaustive = parse_bool(v, l); }}},
      {"seed", {[](RunConfig& c, const std::string& v, int l) { c.seed = parse_u64(v, l); }}},
  };
  return s;
}

}  // namespace

RunConfig parse_toml(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail(line_no, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = schema().find(full);
    if (it == schema().end()) fail(line_no, "unknown key '" + full + "'");
    it->second.set(cfg, value, line_no);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_toml(io::read_text_file(path));
}

std::string RunConfig::to_toml() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "seed = " << seed << "\n\n";
  ss << "[dsp]\n"
     << "target_rate_hz = " << dsp.target_rate_hz << "\n"
     << "n_mels = " << dsp.n_mels << "\n"
     << "n_frames = " << dsp.n_frames << "\n"
     << "fft_size = " << dsp.fft_size << "\n"
     << "hop = " << dsp.hop << "\n"
     << "log_floor = " << dsp.log_floor << "\n\n";
  ss << "[model]\n"
     << "embed_dim = " << model.embed_dim << "\n"
     << "n_layers_enc = " << model.n_layers_enc << "\n"
     << "n_layers_dec = " << model.n_layers_dec << "\n"
     << "n_heads = " << model.n_heads << "\n"
     << "mlp_ratio = " << model.mlp_ratio << "\n"
     << "max_patches = " << model.max_patches << "\n\n";
  ss << "[pretrain]\n"
     << "steps = " << pretrain_steps << "\n"
     << "batch = " << pretrain_batch << "\n"
     << "lr = " << pretrain_lr << "\n"
     << "cosine = " << (pretrain_cosine ? "true" : "false") << "\n"
     << "mask_ratio = " << mask_ratio << "\n"
     << "patch_h = " << patch_h << "\n"
     << "patch_w = " << patch_w << "\n"
     << "full_grid_loss = " << (full_grid_loss ? "true" : "false") << "\n\n";
  ss << "[finetune]\n"
     << "steps = " << finetune_steps << "\n"
     << "batch = " << finetune_batch << "\n"
     << "lr = " << finetune_lr << "\n"
     << "cosine = " << (finetune_cosine ? "true" : "false") << "\n"
     << "encoder_lr_mult = " << encoder_lr_mult << "\n"
     << "freeze_encoder = " << (freeze_encoder ? "true" : "false") << "\n"
     << "keep_ratio = " << keep_ratio << "\n"
     << "class_weights = " << (class_weights ? "true" : "false") << "\n"
     << "allow_missing_classes = " << (allow_missing_classes ? "true" : "false")
     << "\n\n";
  ss << "[indicators]\n"
     << "ssim_pairs = " << ssim_pairs << "\n"
     << "ssim_exhaustive = " << (ssim_exhaustive ? "true" : "false") << "\n";
  return ss.str();
}

std::string RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["dsp"] = {{"target_rate_hz", dsp.target_rate_hz},
              {"n_mels", dsp.n_mels},
              {"n_frames", dsp.n_frames},
              {"fft_size", dsp.fft_size},
              {"hop", dsp.hop},
              {"log_floor", dsp.log_floor}};
  j["model"] = nlohmann::json::parse(model.to_json());
  j["pretrain"] = {{"steps", pretrain_steps},
                   {"batch", pretrain_batch},
                   {"lr", pretrain_lr},
                   {"cosine", pretrain_cosine},
                   {"mask_ratio", mask_ratio},
                   {"patch_h", patch_h},
                   {"patch_w", patch_w},
                   {"full_grid_loss", full_grid_loss}};
  j["finetune"] = {{"steps", finetune_steps},
                   {"batch", finetune_batch},
                   {"lr", finetune_lr},
                   {"cosine", finetune_cosine},
                   {"encoder_lr_mult", encoder_lr_mult},
                   {"freeze_encoder", freeze_encoder},
                   {"keep_ratio", keep_ratio},
                   {"class_weights", class_weights},
                   {"allow_missing_classes", allow_missing_classes}};
  j["indicators"] = {{"ssim_pairs", ssim_pairs},
                     {"ssim_exhaustive", ssim_exhaustive}};
  return j.dump(2);
}

}  // namespace vila::config
