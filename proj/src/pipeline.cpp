#include "oner/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oner/errors.hpp"
#include "oner/rng.hpp"

namespace oner {

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("train config: epochs and batch size must "
                                "be >= 1");
  }
  if (components_per_task < 1 || prompt_length < 1) {
    throw std::invalid_argument("train config: prompt dimensions must be "
                                ">= 1");
  }
  backbone.validate();
}

EngineState init_engine(const TrainConfig& cfg) {
  cfg.validate();
  return EngineState{
      cfg,
      Backbone(cfg.backbone),
      PromptBank(cfg.backbone.dim, cfg.prompt_length, cfg.components_per_task),
      ImagePrototypeBank{},
      PixelPrototypeBank{},
      0};
}

const StoredFeatures* FeatureStore::find(const std::string& sample_id) const {
  for (const StoredFeatures& e : entries) {
    if (e.sample_id == sample_id) return &e;
  }
  return nullptr;
}

namespace {

// Base feature for prompt conditioning comes from the un-prompted encoder.
std::vector<double> base_feature_of(const Backbone& backbone,
                                    const Image& image) {
  FeatureBundle bundle = backbone.encode(image);
  return {bundle.k_image.data().begin(), bundle.k_image.data().end()};
}

Tensor prototype_as_row(const ImagePrototypeEntry& entry) {
  return Tensor({1, entry.values.size()},
                {entry.values.begin(), entry.values.end()});
}

}  // namespace

TrainTaskReport train_task(EngineState& state, const TaskDataset& dataset,
                           DataAccessLog* log) {
  const TrainConfig& cfg = state.config;
  const int task = static_cast<int>(state.completed_tasks) + 1;
  if (dataset.task_id != task) {
    throw std::invalid_argument("train_task: expected task " +
                                std::to_string(task) + ", got " +
                                std::to_string(dataset.task_id));
  }
  if (dataset.train.empty()) {
    throw std::invalid_argument("train_task: empty training split");
  }
  for (const TaskSample& s : dataset.train) {
    if (s.is_anomalous) {
      throw std::invalid_argument(
          "train_task: training split must contain normal samples only");
    }
  }

  auto touch = [log](const TaskSample& s) {
    if (log != nullptr) log->accessed_ids.push_back(s.id);
  };

  TrainTaskReport report;

  // Pre-stage: expand the prompt bank and refine this task's image
  // prototype against the historical bank.
  state.prompts.expand(task, cfg.prompt_seed);

  std::vector<double> i_raw;
  {
    const std::size_t d = cfg.backbone.dim;
    std::vector<double> mean(d, 0.0);
    for (const TaskSample& s : dataset.train) {
      touch(s);
      std::vector<double> f = base_feature_of(state.backbone, s.image);
      for (std::size_t i = 0; i < d; ++i) mean[i] += f[i];
    }
    double norm = 0.0;
    for (double& v : mean) {
      v /= static_cast<double>(dataset.train.size());
    }
    for (double v : mean) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      throw std::domain_error("train_task: zero-norm raw prototype");
    }
    for (double& v : mean) v /= norm;
    i_raw = std::move(mean);
  }
  RefineOutcome refined =
      refine_image_prototype(i_raw, state.image_bank, cfg.refine);
  report.refine_initial_loss = refined.initial_loss;
  report.refine_final_loss = refined.final_loss;
  state.image_bank.integrate(task, refined.prototype);
  const Tensor i_t({cfg.backbone.dim}, state.image_bank.entries().back().values);

  // Training stage: per batch, accumulate the mean of per-image totals on
  // one tape, one backward, one Adam step on the trainable components.
  std::vector<Tensor> params = state.prompts.trainable_parameters();
  AdamState adam(cfg.adam);
  const std::size_t n_train = dataset.train.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n_train; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n_train);
      Tape tape;
      Tensor batch_total;
      LossReport last;
      for (std::size_t s = begin; s < end; ++s) {
        const TaskSample& sample = dataset.train[s];
        touch(sample);
        std::vector<double> base = base_feature_of(state.backbone, sample.image);
        PromptAssembly assembly =
            state.prompts.assemble(tape, Tensor({base.size()}, base));
        FeatureBundle bundle = state.backbone.encode_with_prompt(
            tape, sample.image, assembly.prompt);
        Tensor align = loss_align(tape, bundle.k_image, i_t);
        TscLoss tsc = loss_tsc(tape, bundle.k_pixels, sample.segment_labels,
                               cfg.tsc_sign);
        Tensor itc = loss_itc(tape, bundle.k_pixels, state.pixel_bank);
        Tensor total = loss_total(tape, align, tsc.value, itc);
        last = make_loss_report(align.value(), tsc.value.value(), itc.value(),
                                tsc.pos_pairs, tsc.neg_pairs);
        batch_total =
            batch_total.valid() ? add(tape, batch_total, total) : total;
      }
      Tensor batch_loss = scale(
          tape, batch_total, 1.0 / static_cast<double>(end - begin));
      if (!std::isfinite(batch_loss.value())) {
        throw NumericError("train_task: non-finite batch loss");
      }
      tape.backward(batch_loss);
      adam_step(adam, params);
      epoch_loss += batch_loss.value();
      batches += 1;
      report.last_batch = last;
    }
    report.epoch_mean_loss.push_back(epoch_loss /
                                     static_cast<double>(batches));
  }

  // Post-stage: freeze the new components, then select pixel prototypes
  // from prompt-adapted features against the historical bank.
  state.prompts.freeze_all();

  const std::size_t d = cfg.backbone.dim;
  const std::size_t np = cfg.backbone.num_patches();
  std::vector<double> p_all;
  p_all.reserve(n_train * np * d);
  for (const TaskSample& sample : dataset.train) {
    touch(sample);
    Tape tape;
    std::vector<double> base = base_feature_of(state.backbone, sample.image);
    PromptAssembly assembly =
        state.prompts.assemble(tape, Tensor({base.size()}, base));
    FeatureBundle bundle = state.backbone.encode_with_prompt(
        tape, sample.image, assembly.prompt);
    auto rows = bundle.k_pixels.data();
    p_all.insert(p_all.end(), rows.begin(), rows.end());
  }
  const std::size_t n_select = cfg.effective_pixel_prototypes();
  SelectionResult picks = select_pixel_prototypes(
      p_all, n_train * np, d, state.pixel_bank, n_select);
  state.pixel_bank.integrate(task, n_select, d, std::move(picks.values));

  state.completed_tasks += 1;
  return report;
}

AnomalyResult score_bundle(const EngineState& state,
                           const FeatureBundle& bundle) {
  if (state.pixel_bank.size() == 0) {
    throw std::invalid_argument("score: empty pixel prototype bank");
  }
  const std::size_t d = state.config.backbone.dim;
  const std::size_t np = bundle.k_pixels.rows();
  AnomalyResult out;
  out.patch_scores.reserve(np);
  auto features = bundle.k_pixels.data();
  for (std::size_t i = 0; i < np; ++i) {
    std::span<const double> patch(features.data() + i * d, d);
    double patch_norm = 0.0;
    for (double v : patch) patch_norm += v * v;
    patch_norm = std::sqrt(patch_norm);
    if (patch_norm == 0.0) {
      throw std::domain_error("score: zero-norm patch feature");
    }
    double best = -1.0;
    for (const auto& entry : state.pixel_bank.entries()) {
      for (std::size_t r = 0; r < entry.rows; ++r) {
        auto proto = entry.row(r);
        double s = 0.0, pn = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          s += patch[k] * proto[k];
          pn += proto[k] * proto[k];
        }
        best = std::max(best, s / (patch_norm * std::sqrt(pn)));
      }
    }
    const double score = 1.0 - best;
    out.patch_scores.push_back(score);
    out.image_score = std::max(out.image_score, score);
  }
  return out;
}

AnomalyResult score_image(const EngineState& state, const Image& image) {
  if (state.completed_tasks == 0) {
    throw std::invalid_argument("score_image: engine has no trained tasks");
  }
  Tape tape;
  std::vector<double> base = base_feature_of(state.backbone, image);
  PromptAssembly assembly =
      state.prompts.assemble(tape, Tensor({base.size()}, base));
  FeatureBundle bundle =
      state.backbone.encode_with_prompt(tape, image, assembly.prompt);
  return score_bundle(state, bundle);
}

}  // namespace oner
