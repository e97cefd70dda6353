#include "vila/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vila/io.hpp"
#include "vila/rng.hpp"

namespace vila::model {

using ad::Matrix;
using ad::Var;

void ModelConfig::validate() const {
  if (embed_dim <= 0 || n_layers_enc <= 0 || n_layers_dec <= 0 ||
      n_heads <= 0 || mlp_ratio <= 0.0 || patch_dim <= 0 ||
      max_patches <= 0 || n_classes <= 0) {
    throw std::invalid_argument("invalid model config");
  }
  if (embed_dim % n_heads != 0) {
    throw std::invalid_argument("embed_dim must be divisible by n_heads");
  }
  if (embed_dim % 4 != 0) {
    throw std::invalid_argument("embed_dim must be divisible by 4");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["embed_dim"] = embed_dim;
  j["n_layers_enc"] = n_layers_enc;
  j["n_layers_dec"] = n_layers_dec;
  j["n_heads"] = n_heads;
  j["mlp_ratio"] = mlp_ratio;
  j["patch_dim"] = patch_dim;
  j["max_patches"] = max_patches;
  j["n_classes"] = n_classes;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.n_layers_enc = j.at("n_layers_enc").get<int>();
  c.n_layers_dec = j.at("n_layers_dec").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.patch_dim = j.at("patch_dim").get<int>();
  c.max_patches = j.at("max_patches").get<int>();
  c.n_classes = j.value("n_classes", 7);
  c.seed = j.value("seed", std::uint64_t{0});
  return c;
}

Var ModelParams::at(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw std::out_of_range("missing parameter tensor: " + name);
  }
  return it->second;
}

bool ModelParams::has(const std::string& name) const {
  return tensors.count(name) != 0;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors) t->zero_grad();
}

namespace {

void add_block(ModelParams& p, const std::string& prefix, int dim,
               int mlp_hidden, Rng& rng) {
  auto proj = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.trunc_normal(0.02);
    return ad::parameter(std::move(m));
  };
  auto zeros = [&](int r, int c) { return ad::parameter(Matrix::Zero(r, c)); };
  auto ones = [&](int c) { return ad::parameter(Matrix::Ones(1, c)); };

  p.tensors[prefix + ".ln1.g"] = ones(dim);
  p.tensors[prefix + ".ln1.b"] = zeros(1, dim);
  p.tensors[prefix + ".attn.wq"] = proj(dim, dim);
  p.tensors[prefix + ".attn.bq"] = zeros(1, dim);
  p.tensors[prefix + ".attn.wk"] = proj(dim, dim);
  p.tensors[prefix + ".attn.bk"] = zeros(1, dim);
  p.tensors[prefix + ".attn.wv"] = proj(dim, dim);
  p.tensors[prefix + ".attn.bv"] = zeros(1, dim);
  p.tensors[prefix + ".attn.wo"] = proj(dim, dim);
  p.tensors[prefix + ".attn.bo"] = zeros(1, dim);
  p.tensors[prefix + ".ln2.g"] = ones(dim);
  p.tensors[prefix + ".ln2.b"] = zeros(1, dim);
  p.tensors[prefix + ".mlp.w1"] = proj(dim, mlp_hidden);
  p.tensors[prefix + ".mlp.b1"] = zeros(1, mlp_hidden);
  p.tensors[prefix + ".mlp.w2"] = proj(mlp_hidden, dim);
  p.tensors[prefix + ".mlp.b2"] = zeros(1, dim);
}

// One pre-norm transformer block.
Var run_block(const ModelParams& p, const std::string& prefix, Var x) {
  const int dim = p.config.embed_dim;
  const int heads = p.config.n_heads;
  const int dh = dim / heads;

  Var h = ad::layer_norm(x, p.at(prefix + ".ln1.g"), p.at(prefix + ".ln1.b"));
  Var q = ad::add_rowvec(ad::matmul(h, p.at(prefix + ".attn.wq")),
                         p.at(prefix + ".attn.bq"));
  Var k = ad::add_rowvec(ad::matmul(h, p.at(prefix + ".attn.wk")),
                         p.at(prefix + ".attn.bk"));
  Var v = ad::add_rowvec(ad::matmul(h, p.at(prefix + ".attn.wv")),
                         p.at(prefix + ".attn.bv"));
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int i = 0; i < heads; ++i) {
    Var qh = ad::slice_cols(q, i * dh, dh);
    Var kh = ad::slice_cols(k, i * dh, dh);
    Var vh = ad::slice_cols(v, i * dh, dh);
    Var attn = ad::softmax_rows(ad::scale(ad::matmul_bt(qh, kh), inv_sqrt_dh));
    head_outs.push_back(ad::matmul(attn, vh));
  }
  Var attn_out = ad::add_rowvec(
      ad::matmul(ad::concat_cols(head_outs), p.at(prefix + ".attn.wo")),
      p.at(prefix + ".attn.bo"));
  x = ad::add(x, attn_out);

  Var m = ad::layer_norm(x, p.at(prefix + ".ln2.g"), p.at(prefix + ".ln2.b"));
  m = ad::gelu(ad::add_rowvec(ad::matmul(m, p.at(prefix + ".mlp.w1")),
                              p.at(prefix + ".mlp.b1")));
  m = ad::add_rowvec(ad::matmul(m, p.at(prefix + ".mlp.w2")),
                     p.at(prefix + ".mlp.b2"));
  return ad::add(x, m);
}

Matrix sinusoid_1d(int n_pos, int dim, const std::vector<int>& positions) {
  Matrix pe(n_pos, dim);
  for (int i = 0; i < n_pos; ++i) {
    for (int j = 0; j < dim / 2; ++j) {
      const double freq =
          std::pow(10000.0, -2.0 * j / static_cast<double>(dim));
      const double angle = positions[i] * freq;
      pe(i, 2 * j) = std::sin(angle);
      pe(i, 2 * j + 1) = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace

Matrix positional_encoding(int grid_rows, int grid_cols, int dim) {
  if (dim % 4 != 0) throw std::invalid_argument("pe dim must be divisible by 4");
  const int n = grid_rows * grid_cols;
  std::vector<int> row_idx(n), col_idx(n);
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) {
      row_idx[r * grid_cols + c] = r;
      col_idx[r * grid_cols + c] = c;
    }
  }
  Matrix pe(n, dim);
  pe.leftCols(dim / 2) = sinusoid_1d(n, dim / 2, row_idx);
  pe.rightCols(dim / 2) = sinusoid_1d(n, dim / 2, col_idx);
  return pe;
}

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  Rng rng(derive_seed(config.seed, "model-init"));

  const int dim = config.embed_dim;
  const int mlp_hidden = static_cast<int>(dim * config.mlp_ratio);
  auto proj = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.trunc_normal(0.02);
    return ad::parameter(std::move(m));
  };
  auto zeros = [&](int r, int c) { return ad::parameter(Matrix::Zero(r, c)); };
  auto ones = [&](int c) { return ad::parameter(Matrix::Ones(1, c)); };

  p.tensors["patch_proj.w"] = proj(config.patch_dim, dim);
  p.tensors["patch_proj.b"] = zeros(1, dim);
  for (int l = 0; l < config.n_layers_enc; ++l) {
    add_block(p, "enc." + std::to_string(l), dim, mlp_hidden, rng);
  }
  p.tensors["enc.norm.g"] = ones(dim);
  p.tensors["enc.norm.b"] = zeros(1, dim);

  p.tensors["dec.embed.w"] = proj(dim, dim);
  p.tensors["dec.embed.b"] = zeros(1, dim);
  p.tensors["dec.mask_token"] = proj(1, dim);
  for (int l = 0; l < config.n_layers_dec; ++l) {
    add_block(p, "dec." + std::to_string(l), dim, mlp_hidden, rng);
  }
  p.tensors["dec.norm.g"] = ones(dim);
  p.tensors["dec.norm.b"] = zeros(1, dim);
  p.tensors["dec.out.w"] = proj(dim, config.patch_dim);
  p.tensors["dec.out.b"] = zeros(1, config.patch_dim);
  return p;
}

void ModelParams::attach_head() {
  if (has("head.w")) return;
  Rng rng(derive_seed(config.seed, "head-init"));
  Matrix w(config.embed_dim, config.n_classes);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.trunc_normal(0.02);
  tensors["head.w"] = ad::parameter(std::move(w));
  tensors["head.b"] = ad::parameter(Matrix::Zero(1, config.n_classes));
}

Var encode(const ModelParams& params, const patching::PatchGrid& grid,
           const patching::MaskPlan& plan) {
  if (grid.patch_dim() != params.config.patch_dim) {
    throw std::invalid_argument("incompatible pretraining");
  }
  if (plan.n_patches() != grid.n_patches()) {
    throw std::invalid_argument("plan/grid mismatch");
  }
  if (grid.n_patches() > params.config.max_patches) {
    throw std::invalid_argument("too many patches for model");
  }
  const Matrix pe =
      positional_encoding(grid.rows, grid.cols, params.config.embed_dim);
  const auto visible = plan.visible_indices();

  Matrix vis_patches(static_cast<Eigen::Index>(visible.size()),
                     grid.patch_dim());
  Matrix vis_pe(static_cast<Eigen::Index>(visible.size()),
                params.config.embed_dim);
  for (std::size_t i = 0; i < visible.size(); ++i) {
    vis_patches.row(static_cast<Eigen::Index>(i)) = grid.patches.row(visible[i]);
    vis_pe.row(static_cast<Eigen::Index>(i)) = pe.row(visible[i]);
  }

  Var x = ad::add_rowvec(
      ad::matmul(ad::constant(std::move(vis_patches)), params.at("patch_proj.w")),
      params.at("patch_proj.b"));
  x = ad::add(x, ad::constant(std::move(vis_pe)));
  for (int l = 0; l < params.config.n_layers_enc; ++l) {
    x = run_block(params, "enc." + std::to_string(l), x);
  }
  return ad::layer_norm(x, params.at("enc.norm.g"), params.at("enc.norm.b"));
}

Var decode(const ModelParams& params, const Var& encoded,
           const patching::MaskPlan& plan, int grid_rows, int grid_cols) {
  if (encoded->val.rows() != plan.n_visible()) {
    throw std::invalid_argument("plan/token count mismatch");
  }
  if (grid_rows * grid_cols != plan.n_patches()) {
    throw std::invalid_argument("plan/grid mismatch");
  }
  Var x = ad::add_rowvec(ad::matmul(encoded, params.at("dec.embed.w")),
                         params.at("dec.embed.b"));
  x = ad::scatter_rows(x, params.at("dec.mask_token"), plan.visible);
  x = ad::add(x, ad::constant(positional_encoding(grid_rows, grid_cols,
                                                  params.config.embed_dim)));
  for (int l = 0; l < params.config.n_layers_dec; ++l) {
    x = run_block(params, "dec." + std::to_string(l), x);
  }
  x = ad::layer_norm(x, params.at("dec.norm.g"), params.at("dec.norm.b"));
  return ad::add_rowvec(ad::matmul(x, params.at("dec.out.w")),
                        params.at("dec.out.b"));
}

Var recon_loss_var(const Var& recon, const patching::PatchGrid& original,
                   const patching::MaskPlan& plan, bool full_grid) {
  if (recon->val.rows() != original.patches.rows() ||
      recon->val.cols() != original.patches.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  if (full_grid) return ad::mse_full(recon, original.patches);
  return ad::mse_rows(recon, original.patches, plan.masked_indices());
}

double recon_loss(const patching::PatchGrid& original,
                  const patching::PatchGrid& recon,
                  const patching::MaskPlan& plan, bool full_grid) {
  auto r = ad::constant(recon.patches);
  return recon_loss_var(r, original, plan, full_grid)->val(0, 0);
}

Var forward_loss(const ModelParams& params, const patching::PatchGrid& grid,
                 const patching::MaskPlan& plan, bool full_grid) {
  Var enc = encode(params, grid, plan);
  Var recon = decode(params, enc, plan, grid.rows, grid.cols);
  return recon_loss_var(recon, grid, plan, full_grid);
}

patching::PatchGrid reconstruct(const ModelParams& params,
                                const patching::PatchGrid& grid,
                                const patching::MaskPlan& plan) {
  Var enc = encode(params, grid, plan);
  Var recon = decode(params, enc, plan, grid.rows, grid.cols);
  patching::PatchGrid out = grid;
  out.patches = recon->val;
  return out;
}

Var head_logits(const ModelParams& params, const Var& tokens) {
  Var pooled = ad::mean_rows(tokens);
  return ad::add_rowvec(ad::matmul(pooled, params.at("head.w")),
                        params.at("head.b"));
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(
        (static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

}  // namespace

void ModelParams::save(const std::filesystem::path& path) const {
  std::vector<std::uint8_t> out;
  for (char c : {'M', 'A', 'E', '1'}) out.push_back(c);
  const std::string cfg = config.to_json();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->val.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->val.cols()));
    for (Eigen::Index r = 0; r < t->val.rows(); ++r) {
      for (Eigen::Index c = 0; c < t->val.cols(); ++c) {
        const auto f = static_cast<float>(t->val(r, c));
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_le(out, bits);
      }
    }
  }
  io::write_file(path, out);
}

ModelParams ModelParams::load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw std::runtime_error("truncated checkpoint");
  };
  auto u32 = [&]() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[pos + i]} << (8 * i);
    pos += 4;
    return v;
  };
  auto str = [&](std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  };
  if (str(4) != "MAE1") {
    throw std::runtime_error("bad checkpoint magic: " + path.string());
  }
  ModelParams p;
  p.config = ModelConfig::from_json(str(u32()));
  const std::uint32_t n_tensors = u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = str(u32());
    const std::uint32_t rows = u32(), cols = u32();
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        m(r, c) = static_cast<double>(f);
      }
    }
    p.tensors[name] = ad::parameter(std::move(m));
  }
  return p;
}

}  // namespace vila::model
