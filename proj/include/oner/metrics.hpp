#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace oner {

struct EngineState;
struct TaskDataset;

// Rank-based AUROC with explicit tie handling:
// P(score+ > score-) + 0.5 * P(score+ == score-). Requires both classes.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Area under precision-recall via step interpolation over descending unique
// thresholds; ties share one threshold. Requires at least one positive.
double aupr(std::span<const double> scores, std::span<const int> labels);

// M[j][i]: metric for task i measured after training task j (1-based,
// i <= j). Values must lie in [0, 1].
class MetricMatrix {
 public:
  MetricMatrix(std::string metric_name, std::size_t n_tasks);

  const std::string& name() const { return name_; }
  std::size_t tasks() const { return n_; }
  void set(std::size_t after_task, std::size_t task, double value);
  bool has(std::size_t after_task, std::size_t task) const;
  double get(std::size_t after_task, std::size_t task) const;

 private:
  std::size_t index(std::size_t after_task, std::size_t task) const;
  std::string name_;
  std::size_t n_;
  std::vector<double> cells_;
  std::vector<bool> present_;
};

// Mean over earlier tasks of the peak-to-final drop:
// (1/(N-1)) * sum_i max_{j<N} (M[j][i] - M[N][i]). Negative when the final
// model improved on old tasks.
double forgetting_measure_e(const MetricMatrix& matrix);

// Mean elementwise difference between known-identity and predicted-identity
// metric values (staged-pipeline diagnostic).
double forgetting_measure_s(std::span<const double> known,
                            std::span<const double> pred);

struct TaskEvalResult {
  double image_auroc = 0.0;
  double image_aupr = 0.0;
  double pixel_auroc = 0.0;
  double pixel_aupr = 0.0;
};

// Raw per-image scores captured during evaluate, for oracle recomputation.
struct ScoreDump {
  struct ImageRecord {
    int task_id;
    std::string sample_id;
    int label;
    double image_score;
    std::vector<double> patch_scores;
    std::vector<int> patch_labels;
  };
  std::vector<ImageRecord> images;
};

// Scores every test image of every dataset through the engine; image-level
// metrics from image scores, pixel-level from per-patch scores against
// patch ground truth (a patch is positive iff its mask overlap is >= 0.5).
std::vector<TaskEvalResult> evaluate(const EngineState& state,
                                     const std::vector<TaskDataset>& testsets,
                                     ScoreDump* dump = nullptr);

}  // namespace oner
