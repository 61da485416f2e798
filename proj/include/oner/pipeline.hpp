#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oner/backbone.hpp"
#include "oner/losses.hpp"
#include "oner/optim.hpp"
#include "oner/prompt_bank.hpp"
#include "oner/prototype_banks.hpp"
#include "oner/synthdata.hpp"

namespace oner {

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  AdamConfig adam;  // lr 5e-4, beta1 0.9
  std::size_t components_per_task = 2;  // M_c
  std::size_t prompt_length = 4;        // L_p
  std::size_t pixel_prototypes = 0;     // N_s; 0 means one per patch
  uint64_t prompt_seed = 7;
  TscSign tsc_sign = TscSign::kNegMinusPos;
  BackboneConfig backbone;
  LbfgsConfig refine;

  std::size_t effective_pixel_prototypes() const {
    return pixel_prototypes == 0 ? backbone.num_patches() : pixel_prototypes;
  }
  void validate() const;
};

// The complete experience: frozen encoder, prompt components, and both
// prototype banks, plus how many tasks have been absorbed.
struct EngineState {
  TrainConfig config;
  Backbone backbone;
  PromptBank prompts;
  ImagePrototypeBank image_bank;
  PixelPrototypeBank pixel_bank;
  std::size_t completed_tasks = 0;
};

EngineState init_engine(const TrainConfig& cfg);

// Every sample id read during training; lets callers audit that a task's
// training touched nothing but that task's data.
struct DataAccessLog {
  std::vector<std::string> accessed_ids;
};

struct TrainTaskReport {
  std::vector<double> epoch_mean_loss;
  LossReport last_batch;
  double refine_initial_loss = 0.0;
  double refine_final_loss = 0.0;
};

// One step of the incremental procedure: expand + freeze prompts, refine and
// integrate the image prototype, train the new components on the task's
// normal samples, then coreset-select and integrate pixel prototypes.
TrainTaskReport train_task(EngineState& state, const TaskDataset& dataset,
                           DataAccessLog* log = nullptr);

struct AnomalyResult {
  std::vector<double> patch_scores;  // each in [0, 2]
  double image_score = 0.0;          // max over patch scores
};

// Nearest-prototype scoring over the unified pixel bank; one pass, no task
// identity consumed.
AnomalyResult score_image(const EngineState& state, const Image& image);

// Same scoring applied to an already-extracted feature bundle (supports
// features produced by an external encoder).
AnomalyResult score_bundle(const EngineState& state,
                           const FeatureBundle& bundle);

// Precomputed features keyed by sample id; persisted in the experience file
// so an offline encoder can stand in for the built-in one.
struct StoredFeatures {
  std::string sample_id;
  std::vector<double> k_image;   // d
  std::vector<double> k_pixels;  // N_p x d
};
struct FeatureStore {
  std::vector<StoredFeatures> entries;
  const StoredFeatures* find(const std::string& sample_id) const;
};

// Chunked little-endian binary format, f32 payloads, trailing CRC32.
void save_experience(const EngineState& state,
                     const std::filesystem::path& path,
                     const FeatureStore* features = nullptr);

struct LoadedExperience {
  EngineState state;
  FeatureStore features;
};
LoadedExperience load_experience(const std::filesystem::path& path);

}  // namespace oner
