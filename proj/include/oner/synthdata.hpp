#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oner/image.hpp"
#include "oner/losses.hpp"

namespace oner {

struct DataConfig {
  std::size_t image_side = 32;
  std::size_t patch = 8;
  std::size_t train_count = 24;
  std::size_t test_normal = 16;
  std::size_t test_anomalous = 16;
  double noise_sigma = 0.05;
  std::size_t segment_classes = 3;  // K
  uint64_t seed = 2026;

  std::size_t num_patches() const {
    return (image_side / patch) * (image_side / patch);
  }
  void validate() const;
};

struct TaskSample {
  std::string id;
  Image image;
  bool is_anomalous = false;
  std::vector<uint8_t> mask;  // image-sized, all zero iff normal
  PatchLabels segment_labels;
};

struct TaskDataset {
  int task_id = 0;
  uint64_t seed = 0;
  std::size_t image_side = 0;
  std::size_t patch = 0;
  std::vector<TaskSample> train;  // normal samples only
  std::vector<TaskSample> test;   // mixed normal and anomalous
};

// Deterministic task generator: two task-specific sinusoidal gratings plus
// pixel noise; anomalies are intensity-shifted axis-aligned rectangles;
// segment labels quantize the first grating's phase into K classes reduced
// to patches by majority.
TaskDataset generate_task(int task_id, const DataConfig& cfg, uint64_t seed);

// Directory export: raw little-endian f32 images, raw u8 masks, and a JSON
// manifest carrying ids, labels, and per-patch segment classes.
void export_dataset(const TaskDataset& dataset,
                    const std::filesystem::path& dir);
TaskDataset import_dataset(const std::filesystem::path& dir);

}  // namespace oner
