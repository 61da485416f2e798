#include "oner/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oner/pipeline.hpp"
#include "oner/synthdata.hpp"

namespace oner {

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("auroc: bad input lengths");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l != 0 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auroc: both classes must be present");
  }

  // Average ranks with tie groups, then the Mann-Whitney identity.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) pos_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double aupr(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("aupr: bad input lengths");
  }
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += (l != 0);
  if (n_pos == 0) {
    throw std::invalid_argument("aupr: at least one positive required");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    for (std::size_t k = i; k <= j; ++k) {
      (labels[order[k]] != 0 ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

MetricMatrix::MetricMatrix(std::string metric_name, std::size_t n_tasks)
    : name_(std::move(metric_name)), n_(n_tasks) {
  if (n_ == 0) throw std::invalid_argument("metric matrix: zero tasks");
  cells_.assign(n_ * n_, 0.0);
  present_.assign(n_ * n_, false);
}

std::size_t MetricMatrix::index(std::size_t after_task,
                                std::size_t task) const {
  if (after_task < 1 || after_task > n_ || task < 1 || task > after_task) {
    throw std::invalid_argument(
        "metric matrix: cell outside the lower triangle");
  }
  return (after_task - 1) * n_ + (task - 1);
}

void MetricMatrix::set(std::size_t after_task, std::size_t task,
                       double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument("metric matrix: value outside [0, 1]");
  }
  const std::size_t i = index(after_task, task);
  cells_[i] = value;
  present_[i] = true;
}

bool MetricMatrix::has(std::size_t after_task, std::size_t task) const {
  return present_[index(after_task, task)];
}

double MetricMatrix::get(std::size_t after_task, std::size_t task) const {
  const std::size_t i = index(after_task, task);
  if (!present_[i]) {
    throw std::invalid_argument("metric matrix: missing cell");
  }
  return cells_[i];
}

double forgetting_measure_e(const MetricMatrix& matrix) {
  const std::size_t n = matrix.tasks();
  if (n < 2) {
    throw std::invalid_argument("forgetting_measure_e: needs >= 2 tasks");
  }
  double acc = 0.0;
  for (std::size_t i = 1; i <= n - 1; ++i) {
    double best_drop = -std::numeric_limits<double>::infinity();
    for (std::size_t j = i; j <= n - 1; ++j) {
      best_drop = std::max(best_drop, matrix.get(j, i) - matrix.get(n, i));
    }
    acc += best_drop;
  }
  return acc / static_cast<double>(n - 1);
}

double forgetting_measure_s(std::span<const double> known,
                            std::span<const double> pred) {
  if (known.size() != pred.size() || known.empty()) {
    throw std::invalid_argument("forgetting_measure_s: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < known.size(); ++i) acc += known[i] - pred[i];
  return acc / static_cast<double>(known.size());
}

namespace {

// Patch ground truth: positive iff >= half the patch's pixels are masked.
std::vector<int> patch_truth(const TaskSample& sample, std::size_t side,
                             std::size_t patch) {
  const std::size_t grid = side / patch;
  std::vector<int> out(grid * grid, 0);
  for (std::size_t pr = 0; pr < grid; ++pr)
    for (std::size_t pc = 0; pc < grid; ++pc) {
      std::size_t hits = 0;
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c)
          hits += sample.mask[(pr * patch + r) * side + (pc * patch + c)];
      out[pr * grid + pc] =
          2 * hits >= patch * patch ? 1 : 0;
    }
  return out;
}

}  // namespace

std::vector<TaskEvalResult> evaluate(const EngineState& state,
                                     const std::vector<TaskDataset>& testsets,
                                     ScoreDump* dump) {
  std::vector<TaskEvalResult> results;
  results.reserve(testsets.size());
  for (const TaskDataset& ds : testsets) {
    if (ds.test.empty()) {
      throw std::invalid_argument("evaluate: empty test set for task " +
                                  std::to_string(ds.task_id));
    }
    std::vector<double> image_scores;
    std::vector<int> image_labels;
    std::vector<double> patch_scores;
    std::vector<int> patch_labels;
    for (const TaskSample& sample : ds.test) {
      AnomalyResult r = score_image(state, sample.image);
      image_scores.push_back(r.image_score);
      image_labels.push_back(sample.is_anomalous ? 1 : 0);
      std::vector<int> truth = patch_truth(sample, ds.image_side, ds.patch);
      patch_scores.insert(patch_scores.end(), r.patch_scores.begin(),
                          r.patch_scores.end());
      patch_labels.insert(patch_labels.end(), truth.begin(), truth.end());
      if (dump != nullptr) {
        dump->images.push_back({ds.task_id, sample.id,
                                sample.is_anomalous ? 1 : 0, r.image_score,
                                r.patch_scores, truth});
      }
    }
    TaskEvalResult res;
    res.image_auroc = auroc(image_scores, image_labels);
    res.image_aupr = aupr(image_scores, image_labels);
    res.pixel_auroc = auroc(patch_scores, patch_labels);
    res.pixel_aupr = aupr(patch_scores, patch_labels);
    results.push_back(res);
  }
  return results;
}

}  // namespace oner
