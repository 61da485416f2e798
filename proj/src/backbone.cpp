#include "oner/backbone.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "oner/hashing.hpp"
#include "oner/rng.hpp"

namespace oner {

void BackboneConfig::validate() const {
  if (image_side == 0 || patch == 0 || dim == 0 || blocks == 0 || heads == 0 ||
      mlp_mult == 0) {
    throw std::invalid_argument("backbone config: zero-valued field");
  }
  if (image_side % patch != 0) {
    throw std::invalid_argument(
        "backbone config: image side not divisible by patch size");
  }
  if (dim % heads != 0) {
    throw std::invalid_argument(
        "backbone config: embedding dim not divisible by heads");
  }
}

Tensor patchify(const Image& image, std::size_t patch) {
  if (patch == 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw std::invalid_argument(
        "patchify: image dimensions not divisible by patch size");
  }
  const std::size_t rows = image.height / patch;
  const std::size_t cols = image.width / patch;
  std::vector<double> out;
  out.reserve(rows * cols * patch * patch);
  for (std::size_t pr = 0; pr < rows; ++pr)
    for (std::size_t pc = 0; pc < cols; ++pc)
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c)
          out.push_back(image.at(pr * patch + r, pc * patch + c));
  return Tensor({rows * cols, patch * patch}, std::move(out));
}

namespace {

Tensor init_weight(std::mt19937_64& gen, std::vector<std::size_t> shape,
                   double half_width) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor(std::move(shape), uniform_symmetric_vec(gen, n, half_width));
}

}  // namespace

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.dim;
  const std::size_t p2 = cfg_.patch * cfg_.patch;
  const std::size_t hd = cfg_.mlp_mult * d;
  const double w = 1.0 / std::sqrt(static_cast<double>(d));

  std::mt19937_64 gen(mix_seed(cfg_.seed, 0x0ba5e));
  patch_proj_ = init_weight(gen, {p2, d}, w);
  patch_bias_ = init_weight(gen, {d}, w);
  class_token_ = init_weight(gen, {1, d}, w);
  pos_embed_ = init_weight(gen, {cfg_.num_patches() + 1, d}, w);
  blocks_.reserve(cfg_.blocks);
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    BlockWeights bw;
    bw.ln1_gain = init_weight(gen, {d}, w);
    bw.ln1_bias = init_weight(gen, {d}, w);
    bw.wq = init_weight(gen, {d, d}, w);
    bw.bq = init_weight(gen, {d}, w);
    bw.wk = init_weight(gen, {d, d}, w);
    bw.bk = init_weight(gen, {d}, w);
    bw.wv = init_weight(gen, {d, d}, w);
    bw.bv = init_weight(gen, {d}, w);
    bw.wo = init_weight(gen, {d, d}, w);
    bw.bo = init_weight(gen, {d}, w);
    bw.ln2_gain = init_weight(gen, {d}, w);
    bw.ln2_bias = init_weight(gen, {d}, w);
    bw.w_mlp_in = init_weight(gen, {d, hd}, w);
    bw.b_mlp_in = init_weight(gen, {hd}, w);
    bw.w_mlp_out = init_weight(gen, {hd, d}, w);
    bw.b_mlp_out = init_weight(gen, {d}, w);
    blocks_.push_back(std::move(bw));
  }
  final_gain_ = init_weight(gen, {d}, w);
  final_bias_ = init_weight(gen, {d}, w);
}

void Backbone::for_each_weight(
    const std::function<void(const Tensor&)>& fn) const {
  fn(patch_proj_);
  fn(patch_bias_);
  fn(class_token_);
  fn(pos_embed_);
  for (const BlockWeights& b : blocks_) {
    fn(b.ln1_gain);
    fn(b.ln1_bias);
    fn(b.wq);
    fn(b.bq);
    fn(b.wk);
    fn(b.bk);
    fn(b.wv);
    fn(b.bv);
    fn(b.wo);
    fn(b.bo);
    fn(b.ln2_gain);
    fn(b.ln2_bias);
    fn(b.w_mlp_in);
    fn(b.b_mlp_in);
    fn(b.w_mlp_out);
    fn(b.b_mlp_out);
  }
  fn(final_gain_);
  fn(final_bias_);
}

uint64_t Backbone::weight_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for_each_weight([&h](const Tensor& t) {
    auto bytes = std::as_bytes(
        std::span(t.data().data(), t.data().size()));
    h = fnv1a64(bytes, h);
  });
  return h;
}

Tensor Backbone::embed_tokens(Tape& tape, const Image& image) const {
  if (image.height != cfg_.image_side || image.width != cfg_.image_side) {
    throw std::invalid_argument("encode: image does not match config");
  }
  Tensor patches = patchify(image, cfg_.patch);
  Tensor tokens = add_rowvec(tape, matmul(tape, patches, patch_proj_),
                             patch_bias_);
  tokens = concat_rows(tape, class_token_, tokens);
  return add(tape, tokens, pos_embed_);
}

Tensor Backbone::run_blocks(Tape& tape, Tensor x) const {
  const std::size_t d = cfg_.dim;
  const std::size_t hd = d / cfg_.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (const BlockWeights& b : blocks_) {
    Tensor h = layer_norm(tape, x, b.ln1_gain, b.ln1_bias);
    Tensor q = add_rowvec(tape, matmul(tape, h, b.wq), b.bq);
    Tensor k = add_rowvec(tape, matmul(tape, h, b.wk), b.bk);
    Tensor v = add_rowvec(tape, matmul(tape, h, b.wv), b.bv);
    Tensor heads_out;
    for (std::size_t head = 0; head < cfg_.heads; ++head) {
      const std::size_t c0 = head * hd, c1 = (head + 1) * hd;
      Tensor qh = slice_cols(tape, q, c0, c1);
      Tensor kh = slice_cols(tape, k, c0, c1);
      Tensor vh = slice_cols(tape, v, c0, c1);
      Tensor scores = scale(tape, matmul_nt(tape, qh, kh), att_scale);
      Tensor attn = row_softmax(tape, scores);
      Tensor oh = matmul(tape, attn, vh);
      heads_out = head == 0 ? oh : concat_cols(tape, heads_out, oh);
    }
    Tensor att = add_rowvec(tape, matmul(tape, heads_out, b.wo), b.bo);
    x = add(tape, x, att);

    Tensor h2 = layer_norm(tape, x, b.ln2_gain, b.ln2_bias);
    Tensor m = gelu(tape, add_rowvec(tape, matmul(tape, h2, b.w_mlp_in),
                                     b.b_mlp_in));
    m = add_rowvec(tape, matmul(tape, m, b.w_mlp_out), b.b_mlp_out);
    x = add(tape, x, m);
  }
  return layer_norm(tape, x, final_gain_, final_bias_);
}

FeatureBundle Backbone::split_outputs(Tape& tape, const Tensor& tokens,
                                      std::size_t lead_rows) const {
  const std::size_t np = cfg_.num_patches();
  FeatureBundle out;
  out.k_image = row_l2_normalize(
      tape, slice_rows(tape, tokens, lead_rows, lead_rows + 1));
  out.k_pixels = row_l2_normalize(
      tape, slice_rows(tape, tokens, lead_rows + 1, lead_rows + 1 + np));
  return out;
}

FeatureBundle Backbone::encode(const Image& image) const {
  Tape tape;  // nothing records: no input requires grad
  Tensor tokens = run_blocks(tape, embed_tokens(tape, image));
  return split_outputs(tape, tokens, 0);
}

FeatureBundle Backbone::encode_with_prompt(Tape& tape, const Image& image,
                                           const Tensor& prompt) const {
  if (!prompt.is_matrix() || prompt.cols() != cfg_.dim) {
    throw std::invalid_argument(
        "encode_with_prompt: prompt shape does not match embedding dim");
  }
  Tensor tokens = concat_rows(tape, prompt, embed_tokens(tape, image));
  tokens = run_blocks(tape, tokens);
  return split_outputs(tape, tokens, prompt.rows());
}

}  // namespace oner
