#include "oner/prototype_banks.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "oner/backbone.hpp"
#include "oner/losses.hpp"
#include "oner/synthdata.hpp"
#include "oner/tensor.hpp"

namespace oner {

namespace {

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_unit_rows(std::span<const double> values, std::size_t rows,
                     std::size_t dim, const char* where, double tolerance) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double n = norm_of({values.data() + r * dim, dim});
    if (std::abs(n - 1.0) > tolerance) {
      throw std::invalid_argument(std::string(where) + ": row " +
                                  std::to_string(r) + " is not unit norm");
    }
  }
}

// Values that passed through the f32 on-disk encoding keep unit norm only to
// float precision.
constexpr double kLiveUnitTolerance = 1e-9;
constexpr double kRestoredUnitTolerance = 1e-5;

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

void ImagePrototypeBank::append(int task_id, std::vector<double> prototype,
                                double tolerance) {
  const int expected = entries_.empty() ? 1 : entries_.back().task_id + 1;
  if (task_id != expected) {
    throw std::invalid_argument("image prototype bank: expected task " +
                                std::to_string(expected) + ", got " +
                                std::to_string(task_id));
  }
  check_unit_rows(prototype, 1, prototype.size(), "image prototype bank",
                  tolerance);
  entries_.push_back({task_id, std::move(prototype)});
}

void ImagePrototypeBank::integrate(int task_id,
                                   std::vector<double> prototype) {
  append(task_id, std::move(prototype), kLiveUnitTolerance);
}

void ImagePrototypeBank::restore(int task_id, std::vector<double> prototype) {
  append(task_id, std::move(prototype), kRestoredUnitTolerance);
}

void PixelPrototypeBank::append(int task_id, std::size_t rows,
                                std::size_t dim, std::vector<double> values,
                                double tolerance) {
  const int expected = entries_.empty() ? 1 : entries_.back().task_id + 1;
  if (task_id != expected) {
    throw std::invalid_argument("pixel prototype bank: expected task " +
                                std::to_string(expected) + ", got " +
                                std::to_string(task_id));
  }
  if (values.size() != rows * dim) {
    throw std::invalid_argument("pixel prototype bank: value count mismatch");
  }
  if (!entries_.empty() &&
      (entries_.front().rows != rows || entries_.front().dim != dim)) {
    throw std::invalid_argument(
        "pixel prototype bank: entry shape differs from existing entries");
  }
  check_unit_rows(values, rows, dim, "pixel prototype bank", tolerance);
  entries_.push_back({task_id, rows, dim, std::move(values)});
}

void PixelPrototypeBank::integrate(int task_id, std::size_t rows,
                                   std::size_t dim,
                                   std::vector<double> values) {
  append(task_id, rows, dim, std::move(values), kLiveUnitTolerance);
}

void PixelPrototypeBank::restore(int task_id, std::size_t rows,
                                 std::size_t dim, std::vector<double> values) {
  append(task_id, rows, dim, std::move(values), kRestoredUnitTolerance);
}

std::size_t PixelPrototypeBank::total_rows() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.rows;
  return n;
}

std::vector<double> compute_raw_prototype(const Backbone& backbone,
                                          const TaskDataset& dataset) {
  if (dataset.train.empty()) {
    throw std::invalid_argument("compute_raw_prototype: empty dataset");
  }
  const std::size_t d = backbone.config().dim;
  std::vector<double> mean(d, 0.0);
  for (const TaskSample& sample : dataset.train) {
    FeatureBundle bundle = backbone.encode(sample.image);
    auto row = bundle.k_image.data();
    for (std::size_t i = 0; i < d; ++i) mean[i] += row[i];
  }
  for (double& v : mean) v /= static_cast<double>(dataset.train.size());
  const double n = norm_of(mean);
  if (n == 0.0) {
    throw std::domain_error("compute_raw_prototype: zero mean feature");
  }
  for (double& v : mean) v /= n;
  return mean;
}

RefineOutcome refine_image_prototype(std::span<const double> i_raw,
                                     const ImagePrototypeBank& history,
                                     const LbfgsConfig& cfg) {
  const double raw_norm = norm_of(i_raw);
  if (i_raw.empty() || raw_norm == 0.0) {
    throw std::domain_error("refine_image_prototype: zero-norm raw prototype");
  }
  std::vector<double> raw(i_raw.begin(), i_raw.end());

  auto objective = [&raw, &history](std::span<const double> x,
                                    std::span<double> grad) {
    Tape tape;
    Tensor candidate({x.size()}, {x.begin(), x.end()}, true);
    Tensor raw_t({raw.size()}, raw);
    Tensor loss = loss_ipr(tape, candidate, raw_t, history);
    tape.backward(loss);
    auto g = candidate.grad();
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = g[i];
    return loss.value();
  };

  // The objective is scale-invariant, so optimize from the unit-norm raw
  // prototype; skip the division when it is already unit so the start point
  // stays bit-identical to the caller's vector.
  std::vector<double> start = raw;
  if (std::abs(raw_norm - 1.0) > 1e-12) {
    for (double& v : start) v /= raw_norm;
  }

  LbfgsResult res = lbfgs_minimize(objective, start, cfg);

  RefineOutcome out;
  out.line_search_ok = res.status != LbfgsStatus::kLineSearchFailed;
  std::vector<double> g(raw.size());
  out.initial_loss = objective(start, g);

  std::vector<double> candidate = res.x;
  const double n = norm_of(candidate);
  if (n > 0.0 && std::abs(n - 1.0) > 1e-12) {
    for (double& v : candidate) v /= n;
  }
  double candidate_loss =
      norm_of(candidate) == 0.0 ? std::numeric_limits<double>::infinity()
                                : objective(candidate, g);
  if (candidate_loss > out.initial_loss) {
    // Renormalizing nudged the value past the start; keep the start point so
    // descent holds unconditionally.
    candidate = start;
    candidate_loss = out.initial_loss;
  }
  out.final_loss = candidate_loss;
  out.prototype = std::move(candidate);
  return out;
}

SelectionResult select_pixel_prototypes(std::span<const double> features,
                                        std::size_t rows, std::size_t dim,
                                        const PixelPrototypeBank& history,
                                        std::size_t n_select) {
  if (rows == 0 || features.size() != rows * dim) {
    throw std::invalid_argument("select_pixel_prototypes: empty or malformed "
                                "feature matrix");
  }
  if (n_select == 0 || n_select > rows) {
    throw std::invalid_argument(
        "select_pixel_prototypes: selection count exceeds available rows");
  }

  auto row_at = [&](std::size_t r) {
    return std::span<const double>(features.data() + r * dim, dim);
  };

  // Min squared distance from each feature to the coverage set. Seeded by
  // history, or by the centroid when there is none (centroid is only a
  // seeding device, not a coverage center).
  std::vector<double> min_dist(rows, std::numeric_limits<double>::infinity());
  const bool seeded_by_history = history.size() > 0;
  if (seeded_by_history) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (const auto& entry : history.entries()) {
        for (std::size_t p = 0; p < entry.rows; ++p) {
          min_dist[r] = std::min(min_dist[r],
                                 sq_distance(row_at(r), entry.row(p)));
        }
      }
    }
  } else {
    std::vector<double> centroid(dim, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < dim; ++c) centroid[c] += row_at(r)[c];
    for (double& v : centroid) v /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      min_dist[r] = sq_distance(row_at(r), centroid);
  }

  SelectionResult out;
  out.values.reserve(n_select * dim);
  std::vector<bool> picked(rows, false);
  for (std::size_t k = 0; k < n_select; ++k) {
    std::size_t best = rows;
    double best_dist = -1.0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (picked[r]) continue;
      if (min_dist[r] > best_dist) {
        best_dist = min_dist[r];
        best = r;
      }
    }
    picked[best] = true;
    out.indices.push_back(best);
    auto row = row_at(best);
    out.values.insert(out.values.end(), row.begin(), row.end());

    if (k == 0 && !seeded_by_history) {
      // First pick replaces the centroid seed as the sole coverage center.
      for (std::size_t r = 0; r < rows; ++r)
        min_dist[r] = sq_distance(row_at(r), row);
    } else {
      for (std::size_t r = 0; r < rows; ++r)
        min_dist[r] = std::min(min_dist[r], sq_distance(row_at(r), row));
    }
  }
  return out;
}

double max_min_sq_distance(std::span<const double> points, std::size_t rows,
                           std::size_t dim, std::span<const double> centers,
                           std::size_t center_rows) {
  if (center_rows == 0) {
    throw std::invalid_argument("max_min_sq_distance: no centers");
  }
  double worst = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> p(points.data() + r * dim, dim);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < center_rows; ++c) {
      best = std::min(
          best, sq_distance(p, {centers.data() + c * dim, dim}));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace oner
