#include "oner/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "oner/errors.hpp"
#include "oner/rng.hpp"

namespace oner {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Grating {
  double freq;         // cycles per image
  double angle;        // orientation
  double phase;
};

struct TaskTexture {
  Grating g1, g2;
};

double grating_value(const Grating& g, double x, double y, double side) {
  const double u = x * std::cos(g.angle) + y * std::sin(g.angle);
  return std::sin(2.0 * kPi * g.freq * u / side + g.phase);
}

TaskTexture draw_texture(std::mt19937_64& gen) {
  TaskTexture t;
  t.g1.freq = 1.5 + 3.0 * uniform_unit(gen);
  t.g1.angle = kPi * uniform_unit(gen);
  t.g1.phase = 2.0 * kPi * uniform_unit(gen);
  t.g2.freq = 1.5 + 3.0 * uniform_unit(gen);
  t.g2.angle = kPi * uniform_unit(gen);
  t.g2.phase = 2.0 * kPi * uniform_unit(gen);
  return t;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Image base_image(const TaskTexture& tex, std::size_t side) {
  Image img;
  img.height = img.width = side;
  img.pixels.resize(side * side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double v =
          0.5 + 0.22 * (grating_value(tex.g1, static_cast<double>(x),
                                      static_cast<double>(y),
                                      static_cast<double>(side)) +
                        grating_value(tex.g2, static_cast<double>(x),
                                      static_cast<double>(y),
                                      static_cast<double>(side)));
      img.pixels[y * side + x] = clamp01(v);
    }
  return img;
}

// Per-pixel class from the first grating's phase, quantized into K bins with
// a per-image offset; patch label is the pixel majority (ties to the lowest
// class id). The offset is re-drawn until every class appears in at least
// one patch.
PatchLabels draw_segment_labels(const TaskTexture& tex, const DataConfig& cfg,
                                std::mt19937_64& gen) {
  const std::size_t side = cfg.image_side;
  const std::size_t grid = side / cfg.patch;
  const std::size_t K = cfg.segment_classes;
  PatchLabels labels(grid * grid, 0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double offset = uniform_unit(gen);
    for (std::size_t pr = 0; pr < grid; ++pr)
      for (std::size_t pc = 0; pc < grid; ++pc) {
        std::vector<std::size_t> votes(K, 0);
        for (std::size_t r = 0; r < cfg.patch; ++r)
          for (std::size_t c = 0; c < cfg.patch; ++c) {
            const double x = static_cast<double>(pc * cfg.patch + c);
            const double y = static_cast<double>(pr * cfg.patch + r);
            const double u =
                x * std::cos(tex.g1.angle) + y * std::sin(tex.g1.angle);
            double frac = tex.g1.freq * u / static_cast<double>(side) +
                          tex.g1.phase / (2.0 * kPi) + offset;
            frac -= std::floor(frac);
            votes[std::min(K - 1, static_cast<std::size_t>(
                                      frac * static_cast<double>(K)))] += 1;
          }
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (votes[k] > votes[best]) best = k;
        labels[pr * grid + pc] = static_cast<int>(best);
      }
    std::set<int> seen(labels.begin(), labels.end());
    if (seen.size() == K) return labels;
  }
  return labels;  // last attempt; all-classes coverage is a soft goal
}

TaskSample make_sample(const TaskTexture& tex, const DataConfig& cfg,
                       bool anomalous, std::string id, std::mt19937_64& gen) {
  TaskSample s;
  s.id = std::move(id);
  s.image = base_image(tex, cfg.image_side);
  for (double& p : s.image.pixels) {
    p = clamp01(p + cfg.noise_sigma * normal_unit(gen));
  }
  s.mask.assign(cfg.image_side * cfg.image_side, 0);
  s.segment_labels = draw_segment_labels(tex, cfg, gen);
  s.is_anomalous = anomalous;
  if (anomalous) {
    const auto side = static_cast<double>(cfg.image_side);
    const auto draw_extent = [&] {
      const double frac = 0.1 + 0.3 * uniform_unit(gen);
      return std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(frac * side)));
    };
    const std::size_t h = draw_extent();
    const std::size_t w = draw_extent();
    const std::size_t r0 = static_cast<std::size_t>(
        uniform_unit(gen) * static_cast<double>(cfg.image_side - h + 1));
    const std::size_t c0 = static_cast<std::size_t>(
        uniform_unit(gen) * static_cast<double>(cfg.image_side - w + 1));
    const double shift = uniform_unit(gen) < 0.5 ? -0.5 : 0.5;
    for (std::size_t r = r0; r < r0 + h; ++r)
      for (std::size_t c = c0; c < c0 + w; ++c) {
        s.image.at(r, c) = clamp01(s.image.at(r, c) + shift);
        s.mask[r * cfg.image_side + c] = 1;
      }
  }
  return s;
}

}  // namespace

void DataConfig::validate() const {
  if (image_side == 0 || patch == 0 || image_side % patch != 0) {
    throw std::invalid_argument(
        "data config: image side must be a positive multiple of patch");
  }
  if (train_count == 0 || test_normal == 0 || test_anomalous == 0) {
    throw std::invalid_argument("data config: sample counts must be positive");
  }
  if (segment_classes == 0 || noise_sigma < 0.0) {
    throw std::invalid_argument("data config: bad segment classes or noise");
  }
}

TaskDataset generate_task(int task_id, const DataConfig& cfg, uint64_t seed) {
  if (task_id < 1) {
    throw std::invalid_argument("generate_task: task id must be >= 1");
  }
  cfg.validate();

  std::mt19937_64 texture_gen(
      mix_seed(seed, static_cast<uint64_t>(task_id) * 2 + 0));
  std::mt19937_64 sample_gen(
      mix_seed(seed, static_cast<uint64_t>(task_id) * 2 + 1));
  const TaskTexture tex = draw_texture(texture_gen);

  TaskDataset ds;
  ds.task_id = task_id;
  ds.seed = seed;
  ds.image_side = cfg.image_side;
  ds.patch = cfg.patch;

  const std::string prefix = "t" + std::to_string(task_id);
  for (std::size_t i = 0; i < cfg.train_count; ++i) {
    ds.train.push_back(make_sample(
        tex, cfg, false, prefix + "-train-" + std::to_string(i), sample_gen));
  }
  for (std::size_t i = 0; i < cfg.test_normal; ++i) {
    ds.test.push_back(make_sample(
        tex, cfg, false, prefix + "-test-" + std::to_string(i), sample_gen));
  }
  for (std::size_t i = 0; i < cfg.test_anomalous; ++i) {
    ds.test.push_back(make_sample(
        tex, cfg, true,
        prefix + "-test-" + std::to_string(cfg.test_normal + i), sample_gen));
  }
  return ds;
}

namespace {

void write_f32_image(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (double v : img.pixels) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

Image read_f32_image(const std::filesystem::path& path, std::size_t side) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Image img;
  img.height = img.width = side;
  img.pixels.resize(side * side);
  for (double& v : img.pixels) {
    float f = 0.0f;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    if (!in) throw std::runtime_error("short image file " + path.string());
    v = static_cast<double>(f);
  }
  return img;
}

}  // namespace

void export_dataset(const TaskDataset& dataset,
                    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "test");

  nlohmann::json manifest;
  manifest["task_id"] = dataset.task_id;
  manifest["seed"] = dataset.seed;
  manifest["image_side"] = dataset.image_side;
  manifest["patch"] = dataset.patch;
  auto emit = [&](const std::vector<TaskSample>& samples,
                  const std::string& split) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const TaskSample& s = samples[i];
      const std::string stem = split + "/" + std::to_string(i);
      write_f32_image(dir / (stem + ".img"), s.image);
      nlohmann::json rec;
      rec["id"] = s.id;
      rec["image"] = stem + ".img";
      rec["anomalous"] = s.is_anomalous;
      rec["segment_labels"] = s.segment_labels;
      if (s.is_anomalous) {
        std::ofstream mask(dir / (stem + ".mask"), std::ios::binary);
        mask.write(reinterpret_cast<const char*>(s.mask.data()),
                   static_cast<std::streamsize>(s.mask.size()));
        rec["mask"] = stem + ".mask";
      } else {
        rec["mask"] = nullptr;
      }
      arr.push_back(std::move(rec));
    }
    manifest[split] = std::move(arr);
  };
  emit(dataset.train, "train");
  emit(dataset.test, "test");

  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

TaskDataset import_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) {
    throw std::runtime_error("import_dataset: no manifest.json in " +
                             dir.string());
  }
  nlohmann::json manifest = nlohmann::json::parse(in);

  TaskDataset ds;
  ds.task_id = manifest.at("task_id").get<int>();
  ds.seed = manifest.at("seed").get<uint64_t>();
  ds.image_side = manifest.at("image_side").get<std::size_t>();
  ds.patch = manifest.at("patch").get<std::size_t>();

  auto load = [&](const std::string& split, std::vector<TaskSample>& out_vec) {
    for (const auto& rec : manifest.at(split)) {
      TaskSample s;
      s.id = rec.at("id").get<std::string>();
      s.image = read_f32_image(dir / rec.at("image").get<std::string>(),
                               ds.image_side);
      s.is_anomalous = rec.at("anomalous").get<bool>();
      s.segment_labels = rec.at("segment_labels").get<PatchLabels>();
      s.mask.assign(ds.image_side * ds.image_side, 0);
      if (!rec.at("mask").is_null()) {
        std::ifstream mask(dir / rec.at("mask").get<std::string>(),
                           std::ios::binary);
        mask.read(reinterpret_cast<char*>(s.mask.data()),
                  static_cast<std::streamsize>(s.mask.size()));
        if (!mask) {
          throw std::runtime_error("import_dataset: short mask file");
        }
      }
      out_vec.push_back(std::move(s));
    }
  };
  load("train", ds.train);
  load("test", ds.test);
  return ds;
}

}  // namespace oner
