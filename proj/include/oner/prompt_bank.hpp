#pragma once

#include <cstdint>
#include <vector>

#include "oner/tensor.hpp"

namespace oner {

// One decomposed component: a query row, a key row, and a value block that
// contributes to the assembled prompt through its cosine attention weight.
struct PromptComponent {
  Tensor query;  // d
  Tensor key;    // d
  Tensor value;  // L_p x d
  int owner_task = 0;
  bool frozen = false;
};

// Result of image-conditioned assembly. Weights are raw cosines in [-1, 1];
// prompt == sum_i alpha_i * value_i exactly.
struct PromptAssembly {
  std::vector<Tensor> alphas;       // M scalars
  std::vector<Tensor> conditioned;  // M rows of q(x), each d
  Tensor prompt;                    // L_p x d
};

// Expandable component store. Exactly the components added for the current
// task are trainable; every earlier component is frozen and bit-immutable.
class PromptBank {
 public:
  PromptBank(std::size_t dim, std::size_t prompt_length,
             std::size_t components_per_task);

  std::size_t dim() const { return dim_; }
  std::size_t prompt_length() const { return prompt_length_; }
  std::size_t components_per_task() const { return components_per_task_; }
  std::size_t component_count() const { return components_.size(); }
  std::size_t completed_expansions() const {
    return components_.size() / components_per_task_;
  }
  const PromptComponent& component(std::size_t i) const {
    return components_[i];
  }

  // Appends components_per_task seeded components owned by `task` and
  // freezes all previous ones. `task` must be the next sequential index.
  void expand(int task, uint64_t seed);

  // Marks every component frozen (end of a task's training stage).
  void freeze_all();

  // q(x)_i = base_feature ⊙ query_i; alpha_i = cos(q(x)_i, key_i) with
  // alpha_i := 0 when either argument has zero norm; prompt = sum alpha_i v_i.
  PromptAssembly assemble(Tape& tape, const Tensor& base_feature) const;

  // Un-frozen components' q, k, v in component order.
  std::vector<Tensor> trainable_parameters() const;
  std::size_t trainable_parameter_count() const;

  // Used by persistence to reconstruct a bank entry-by-entry.
  void restore_component(PromptComponent component);

 private:
  std::size_t dim_;
  std::size_t prompt_length_;
  std::size_t components_per_task_;
  std::vector<PromptComponent> components_;
};

}  // namespace oner
