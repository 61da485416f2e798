#pragma once

#include <cstdint>
#include <vector>

#include "oner/image.hpp"
#include "oner/tensor.hpp"

namespace oner {

struct BackboneConfig {
  std::size_t image_side = 32;
  std::size_t patch = 8;
  std::size_t dim = 32;  // embedding dim d
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t mlp_mult = 2;
  uint64_t seed = 1;

  std::size_t patches_per_side() const { return image_side / patch; }
  std::size_t num_patches() const {
    return patches_per_side() * patches_per_side();
  }
  void validate() const;  // divisibility constraints
};

// One image's features: class-token row and patch-token rows, each row
// L2-normalized. Tensors are differentiable when produced under a prompt.
struct FeatureBundle {
  Tensor k_image;   // 1 x d
  Tensor k_pixels;  // N_p x d
};

// Splits an image into non-overlapping patches, one flattened patch per row
// in raster order. Shape (N_p, patch^2).
Tensor patchify(const Image& image, std::size_t patch);

// Frozen, seeded toy vision transformer. Weights are fixed at construction
// and never receive gradients; identical (config, seed) gives bit-identical
// weights.
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  const BackboneConfig& config() const { return cfg_; }
  uint64_t weight_hash() const;

  // Un-prompted encoding; pure function of (weights, image).
  FeatureBundle encode(const Image& image) const;

  // Prompt tokens (L_p x d) are prepended before block 1 and attend in all
  // blocks; their output positions are discarded. Gradients flow to the
  // prompt only, never to the frozen weights.
  FeatureBundle encode_with_prompt(Tape& tape, const Image& image,
                                   const Tensor& prompt) const;

 private:
  Tensor embed_tokens(Tape& tape, const Image& image) const;
  Tensor run_blocks(Tape& tape, Tensor tokens) const;
  FeatureBundle split_outputs(Tape& tape, const Tensor& tokens,
                              std::size_t lead_rows) const;
  void for_each_weight(const std::function<void(const Tensor&)>& fn) const;

  struct BlockWeights {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w_mlp_in, b_mlp_in, w_mlp_out, b_mlp_out;
  };

  BackboneConfig cfg_;
  Tensor patch_proj_;   // patch^2 x d
  Tensor patch_bias_;   // d
  Tensor class_token_;  // 1 x d
  Tensor pos_embed_;    // (N_p + 1) x d
  std::vector<BlockWeights> blocks_;
  Tensor final_gain_, final_bias_;
};

}  // namespace oner
