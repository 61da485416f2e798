#include "oner/prompt_bank.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "oner/rng.hpp"

namespace oner {

PromptBank::PromptBank(std::size_t dim, std::size_t prompt_length,
                       std::size_t components_per_task)
    : dim_(dim),
      prompt_length_(prompt_length),
      components_per_task_(components_per_task) {
  if (dim == 0 || prompt_length == 0 || components_per_task == 0) {
    throw std::invalid_argument("prompt bank: zero-valued dimension");
  }
}

void PromptBank::expand(int task, uint64_t seed) {
  const int expected = static_cast<int>(completed_expansions()) + 1;
  if (task != expected) {
    throw std::invalid_argument("prompt bank: expand expects task " +
                                std::to_string(expected) + ", got " +
                                std::to_string(task));
  }
  for (PromptComponent& c : components_) {
    c.frozen = true;
    c.query.node()->requires_grad = false;
    c.query.node()->grad.clear();
    c.key.node()->requires_grad = false;
    c.key.node()->grad.clear();
    c.value.node()->requires_grad = false;
    c.value.node()->grad.clear();
  }
  const double w = 1.0 / std::sqrt(static_cast<double>(dim_));
  std::mt19937_64 gen(mix_seed(seed, static_cast<uint64_t>(task)));
  for (std::size_t j = 0; j < components_per_task_; ++j) {
    PromptComponent c;
    c.query = Tensor({dim_}, uniform_symmetric_vec(gen, dim_, w), true);
    c.key = Tensor({dim_}, uniform_symmetric_vec(gen, dim_, w), true);
    c.value = Tensor({prompt_length_, dim_},
                     uniform_symmetric_vec(gen, prompt_length_ * dim_, w),
                     true);
    c.owner_task = task;
    c.frozen = false;
    components_.push_back(std::move(c));
  }
}

void PromptBank::freeze_all() {
  for (PromptComponent& c : components_) {
    c.frozen = true;
    c.query.node()->requires_grad = false;
    c.query.node()->grad.clear();
    c.key.node()->requires_grad = false;
    c.key.node()->grad.clear();
    c.value.node()->requires_grad = false;
    c.value.node()->grad.clear();
  }
}

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

PromptAssembly PromptBank::assemble(Tape& tape,
                                    const Tensor& base_feature) const {
  if (components_.empty()) {
    throw std::invalid_argument("prompt bank: assemble on empty bank");
  }
  if (base_feature.size() != dim_) {
    throw std::invalid_argument("prompt bank: base feature length != dim");
  }
  // The base feature comes from the un-prompted encoder and is treated as a
  // constant; accept either a flat d-vector or a 1 x d row.
  Tensor base({dim_}, {base_feature.data().begin(), base_feature.data().end()});

  PromptAssembly out;
  out.alphas.reserve(components_.size());
  out.conditioned.reserve(components_.size());
  bool have_prompt = false;
  for (const PromptComponent& c : components_) {
    Tensor conditioned = mul(tape, base, c.query);
    out.conditioned.push_back(conditioned);

    Tensor alpha;
    if (squared_norm(conditioned.data()) == 0.0 ||
        squared_norm(c.key.data()) == 0.0) {
      alpha = Tensor::scalar(0.0);  // zero-norm guard, no gradient path
    } else {
      alpha = cosine_similarity(tape, conditioned, c.key);
    }
    out.alphas.push_back(alpha);
    if (alpha.value() != 0.0 || alpha.requires_grad()) {
      Tensor term = scale_by(tape, c.value, alpha);
      out.prompt = have_prompt ? add(tape, out.prompt, term) : term;
      have_prompt = true;
    }
  }
  if (!have_prompt) {
    out.prompt = Tensor::zeros({prompt_length_, dim_});
  }
  return out;
}

std::vector<Tensor> PromptBank::trainable_parameters() const {
  std::vector<Tensor> params;
  for (const PromptComponent& c : components_) {
    if (c.frozen) continue;
    params.push_back(c.query);
    params.push_back(c.key);
    params.push_back(c.value);
  }
  return params;
}

std::size_t PromptBank::trainable_parameter_count() const {
  std::size_t trainable = 0;
  for (const PromptComponent& c : components_) {
    if (!c.frozen) ++trainable;
  }
  return trainable * (2 * dim_ + prompt_length_ * dim_);
}

void PromptBank::restore_component(PromptComponent component) {
  if (component.query.size() != dim_ || component.key.size() != dim_ ||
      component.value.size() != prompt_length_ * dim_) {
    throw std::invalid_argument("prompt bank: restored component has wrong "
                                "shape");
  }
  components_.push_back(std::move(component));
}

}  // namespace oner
