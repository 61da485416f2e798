#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oner/optim.hpp"

namespace oner {

class Backbone;
struct TaskDataset;

struct ImagePrototypeEntry {
  int task_id = 0;
  std::vector<double> values;  // unit d-vector
};

// One immutable unit prototype per completed task.
class ImagePrototypeBank {
 public:
  void integrate(int task_id, std::vector<double> prototype);
  // Same ordering rules with a unit-norm tolerance wide enough for values
  // rounded through the f32 on-disk representation.
  void restore(int task_id, std::vector<double> prototype);
  std::size_t size() const { return entries_.size(); }
  const ImagePrototypeEntry& entry(std::size_t i) const { return entries_[i]; }
  const std::vector<ImagePrototypeEntry>& entries() const { return entries_; }

 private:
  void append(int task_id, std::vector<double> prototype, double tolerance);
  std::vector<ImagePrototypeEntry> entries_;
};

struct PixelPrototypeEntry {
  int task_id = 0;
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // rows x dim, unit rows
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * dim, dim};
  }
};

// N_s unit rows per completed task; entries immutable once added.
class PixelPrototypeBank {
 public:
  void integrate(int task_id, std::size_t rows, std::size_t dim,
                 std::vector<double> values);
  void restore(int task_id, std::size_t rows, std::size_t dim,
               std::vector<double> values);
  std::size_t size() const { return entries_.size(); }
  std::size_t total_rows() const;
  const PixelPrototypeEntry& entry(std::size_t i) const { return entries_[i]; }
  const std::vector<PixelPrototypeEntry>& entries() const { return entries_; }

 private:
  void append(int task_id, std::size_t rows, std::size_t dim,
              std::vector<double> values, double tolerance);
  std::vector<PixelPrototypeEntry> entries_;
};

// Mean un-prompted image-level feature over the task's training images,
// L2-normalized.
std::vector<double> compute_raw_prototype(const Backbone& backbone,
                                          const TaskDataset& dataset);

struct RefineOutcome {
  std::vector<double> prototype;  // unit norm
  bool line_search_ok = true;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Minimizes -cos(i, i_raw) + max_h cos(i, h) from i_raw via L-BFGS; the
// result is re-normalized (the objective is scale-invariant) and never has
// a higher objective than i_raw.
RefineOutcome refine_image_prototype(std::span<const double> i_raw,
                                     const ImagePrototypeBank& history,
                                     const LbfgsConfig& cfg = {});

struct SelectionResult {
  std::vector<std::size_t> indices;  // rows of the feature matrix, pick order
  std::vector<double> values;        // indices.size() x dim
};

// Greedy farthest-first coreset over squared Euclidean distance, seeded
// against the historical prototypes (or the feature centroid when history
// is empty). Ties break toward the lowest row index.
SelectionResult select_pixel_prototypes(std::span<const double> features,
                                        std::size_t rows, std::size_t dim,
                                        const PixelPrototypeBank& history,
                                        std::size_t n_select);

// max over `points` of the min squared distance to any center; the coverage
// objective the greedy selection approximates.
double max_min_sq_distance(std::span<const double> points, std::size_t rows,
                           std::size_t dim,
                           std::span<const double> centers,
                           std::size_t center_rows);

}  // namespace oner
