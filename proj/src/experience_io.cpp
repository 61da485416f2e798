#include <cstring>
#include <fstream>
#include <stdexcept>

#include "oner/errors.hpp"
#include "oner/hashing.hpp"
#include "oner/pipeline.hpp"

// Experience file layout (all little-endian):
//   "ONER" magic, u32 version,
//   chunks: u32 tag, u64 payload length, payload bytes
//     CNFG  dimensions, seeds, training hyperparameters, task counter
//     PRMT  prompt components (owner task, frozen flag, f32 q/k/v)
//     IMGB  image prototypes (task id, f32 vector)
//     PIXB  pixel prototypes (task id, row count, f32 rows)
//     FEAT  optional precomputed feature bundles keyed by sample id
//   trailing u32 CRC32 over everything before it.
// Tensor payloads are IEEE-754 f32; the in-memory engine is f64, so a
// save/load round trip is bit-exact at f32 precision.

namespace oner {

namespace {

constexpr char kMagic[4] = {'O', 'N', 'E', 'R'};
constexpr uint32_t kVersion = 1;

constexpr uint32_t fourcc(char a, char b, char c, char d) {
  return static_cast<uint32_t>(static_cast<unsigned char>(a)) |
         static_cast<uint32_t>(static_cast<unsigned char>(b)) << 8 |
         static_cast<uint32_t>(static_cast<unsigned char>(c)) << 16 |
         static_cast<uint32_t>(static_cast<unsigned char>(d)) << 24;
}

constexpr uint32_t kTagConfig = fourcc('C', 'N', 'F', 'G');
constexpr uint32_t kTagPrompts = fourcc('P', 'R', 'M', 'T');
constexpr uint32_t kTagImageBank = fourcc('I', 'M', 'G', 'B');
constexpr uint32_t kTagPixelBank = fourcc('P', 'I', 'X', 'B');
constexpr uint32_t kTagFeatures = fourcc('F', 'E', 'A', 'T');

class Writer {
 public:
  void u8(uint8_t v) { bytes_.push_back(static_cast<std::byte>(v)); }
  void u16(uint16_t v) { raw(&v, sizeof v); }
  void u32(uint32_t v) { raw(&v, sizeof v); }
  void u64(uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f32_vec(std::span<const double> values) {
    for (double v : values) f32(static_cast<float>(v));
  }
  void str(const std::string& s) {
    if (s.size() > 0xFFFF) {
      throw std::invalid_argument("experience: sample id too long");
    }
    u16(static_cast<uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::byte> take() { return std::move(bytes_); }
  const std::vector<std::byte>& bytes() const { return bytes_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::byte> bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::byte> bytes, std::size_t base_offset)
      : bytes_(bytes), base_(base_offset) {}

  std::size_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint16_t u16() { return scalar<uint16_t>(); }
  uint32_t u32() { return scalar<uint32_t>(); }
  uint64_t u64() { return scalar<uint64_t>(); }
  float f32() { return scalar<float>(); }
  std::vector<double> f32_vec(std::size_t n) {
    std::vector<double> out(n);
    for (double& v : out) v = static_cast<double>(f32());
    return out;
  }
  std::string str() {
    const std::size_t n = u16();
    auto bytes = take(n);
    return std::string(reinterpret_cast<const char*>(bytes.data()), n);
  }

 private:
  template <typename T>
  T scalar() {
    auto bytes = take(sizeof(T));
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
  }
  std::span<const std::byte> take(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(offset(), "truncated field");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::span<const std::byte> bytes_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

void append_chunk(Writer& file, uint32_t tag, Writer&& payload) {
  std::vector<std::byte> body = payload.take();
  file.u32(tag);
  file.u64(body.size());
  for (std::byte b : body) file.u8(static_cast<uint8_t>(b));
}

Writer config_chunk(const EngineState& state) {
  const TrainConfig& c = state.config;
  Writer w;
  w.u32(static_cast<uint32_t>(c.backbone.image_side));
  w.u32(static_cast<uint32_t>(c.backbone.patch));
  w.u32(static_cast<uint32_t>(c.backbone.dim));
  w.u32(static_cast<uint32_t>(c.backbone.blocks));
  w.u32(static_cast<uint32_t>(c.backbone.heads));
  w.u32(static_cast<uint32_t>(c.backbone.mlp_mult));
  w.u64(c.backbone.seed);
  w.u32(static_cast<uint32_t>(c.components_per_task));
  w.u32(static_cast<uint32_t>(c.prompt_length));
  w.u32(static_cast<uint32_t>(c.effective_pixel_prototypes()));
  w.u32(static_cast<uint32_t>(state.completed_tasks));
  w.u32(static_cast<uint32_t>(c.epochs));
  w.u32(static_cast<uint32_t>(c.batch_size));
  w.f32(static_cast<float>(c.adam.lr));
  w.f32(static_cast<float>(c.adam.beta1));
  w.f32(static_cast<float>(c.adam.beta2));
  w.f32(static_cast<float>(c.adam.epsilon));
  w.u64(c.prompt_seed);
  w.u32(c.tsc_sign == TscSign::kNegMinusPos ? 0 : 1);
  return w;
}

}  // namespace

void save_experience(const EngineState& state,
                     const std::filesystem::path& path,
                     const FeatureStore* features) {
  Writer file;
  for (char c : kMagic) file.u8(static_cast<uint8_t>(c));
  file.u32(kVersion);

  append_chunk(file, kTagConfig, config_chunk(state));

  Writer prompts;
  prompts.u32(static_cast<uint32_t>(state.prompts.component_count()));
  for (std::size_t i = 0; i < state.prompts.component_count(); ++i) {
    const PromptComponent& c = state.prompts.component(i);
    prompts.u32(static_cast<uint32_t>(c.owner_task));
    prompts.u8(c.frozen ? 1 : 0);
    prompts.f32_vec(c.query.data());
    prompts.f32_vec(c.key.data());
    prompts.f32_vec(c.value.data());
  }
  append_chunk(file, kTagPrompts, std::move(prompts));

  Writer img;
  img.u32(static_cast<uint32_t>(state.image_bank.size()));
  for (const auto& e : state.image_bank.entries()) {
    img.u32(static_cast<uint32_t>(e.task_id));
    img.f32_vec(e.values);
  }
  append_chunk(file, kTagImageBank, std::move(img));

  Writer pix;
  pix.u32(static_cast<uint32_t>(state.pixel_bank.size()));
  for (const auto& e : state.pixel_bank.entries()) {
    pix.u32(static_cast<uint32_t>(e.task_id));
    pix.u32(static_cast<uint32_t>(e.rows));
    pix.f32_vec(e.values);
  }
  append_chunk(file, kTagPixelBank, std::move(pix));

  if (features != nullptr && !features->entries.empty()) {
    Writer feat;
    feat.u32(static_cast<uint32_t>(features->entries.size()));
    for (const StoredFeatures& e : features->entries) {
      feat.str(e.sample_id);
      feat.f32_vec(e.k_image);
      feat.f32_vec(e.k_pixels);
    }
    append_chunk(file, kTagFeatures, std::move(feat));
  }

  const uint32_t crc = crc32(file.bytes());
  file.u32(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("save_experience: cannot open " + path.string());
  }
  const auto& bytes = file.bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("save_experience: write failed for " +
                             path.string());
  }
}

LoadedExperience load_experience(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_experience: cannot open " + path.string());
  }
  std::vector<std::byte> bytes;
  {
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0);
    bytes.resize(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) {
      throw ParseError(0, "could not read file body");
    }
  }

  if (bytes.size() < 12) {  // magic + version + crc
    throw ParseError(bytes.size(), "file too short");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (static_cast<char>(bytes[i]) != kMagic[i]) {
      throw ParseError(i, "bad magic");
    }
  }
  {
    uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    const uint32_t computed =
        crc32(std::span(bytes.data(), bytes.size() - 4));
    if (stored != computed) {
      throw ParseError(bytes.size() - 4, "checksum mismatch");
    }
  }

  Reader header(std::span(bytes.data() + 4, 4), 4);
  const uint32_t version = header.u32();
  if (version != kVersion) {
    throw ParseError(4, "unsupported version " + std::to_string(version));
  }

  // Chunk scan.
  struct Chunk {
    uint32_t tag;
    std::size_t offset;
    std::span<const std::byte> payload;
  };
  std::vector<Chunk> chunks;
  {
    std::size_t pos = 8;
    const std::size_t end = bytes.size() - 4;
    while (pos < end) {
      if (pos + 12 > end) {
        throw ParseError(pos, "truncated chunk header");
      }
      uint32_t tag = 0;
      uint64_t len = 0;
      std::memcpy(&tag, bytes.data() + pos, 4);
      std::memcpy(&len, bytes.data() + pos + 4, 8);
      if (len > end - pos - 12) {
        throw ParseError(pos + 4, "chunk length exceeds file");
      }
      chunks.push_back(
          {tag, pos + 12, std::span(bytes.data() + pos + 12,
                                    static_cast<std::size_t>(len))});
      pos += 12 + static_cast<std::size_t>(len);
    }
  }
  auto find_chunk = [&chunks, &bytes](uint32_t tag,
                                      const char* name) -> const Chunk& {
    for (const Chunk& c : chunks) {
      if (c.tag == tag) return c;
    }
    throw ParseError(bytes.size(), std::string("missing chunk ") + name);
  };
  for (const Chunk& c : chunks) {
    if (c.tag != kTagConfig && c.tag != kTagPrompts &&
        c.tag != kTagImageBank && c.tag != kTagPixelBank &&
        c.tag != kTagFeatures) {
      throw ParseError(c.offset - 12, "unknown chunk tag");
    }
  }

  // CNFG
  TrainConfig cfg;
  std::size_t completed = 0;
  {
    const Chunk& c = find_chunk(kTagConfig, "CNFG");
    Reader r(c.payload, c.offset);
    cfg.backbone.image_side = r.u32();
    cfg.backbone.patch = r.u32();
    cfg.backbone.dim = r.u32();
    cfg.backbone.blocks = r.u32();
    cfg.backbone.heads = r.u32();
    cfg.backbone.mlp_mult = r.u32();
    cfg.backbone.seed = r.u64();
    cfg.components_per_task = r.u32();
    cfg.prompt_length = r.u32();
    cfg.pixel_prototypes = r.u32();
    completed = r.u32();
    cfg.epochs = r.u32();
    cfg.batch_size = r.u32();
    cfg.adam.lr = static_cast<double>(r.f32());
    cfg.adam.beta1 = static_cast<double>(r.f32());
    cfg.adam.beta2 = static_cast<double>(r.f32());
    cfg.adam.epsilon = static_cast<double>(r.f32());
    cfg.prompt_seed = r.u64();
    cfg.tsc_sign = r.u32() == 0 ? TscSign::kNegMinusPos : TscSign::kPosMinusNeg;
    if (!r.done()) {
      throw ParseError(r.offset(), "trailing bytes in CNFG");
    }
    try {
      cfg.validate();
    } catch (const std::exception& e) {
      throw ParseError(c.offset, std::string("invalid config: ") + e.what());
    }
  }

  LoadedExperience out{init_engine(cfg), {}};
  EngineState& state = out.state;
  state.completed_tasks = completed;
  const std::size_t d = cfg.backbone.dim;

  // PRMT
  {
    const Chunk& c = find_chunk(kTagPrompts, "PRMT");
    Reader r(c.payload, c.offset);
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
      PromptComponent comp;
      comp.owner_task = static_cast<int>(r.u32());
      comp.frozen = r.u8() != 0;
      const bool trainable = !comp.frozen;
      comp.query = Tensor({d}, r.f32_vec(d), trainable);
      comp.key = Tensor({d}, r.f32_vec(d), trainable);
      comp.value = Tensor({cfg.prompt_length, d},
                          r.f32_vec(cfg.prompt_length * d), trainable);
      state.prompts.restore_component(std::move(comp));
    }
    if (!r.done()) {
      throw ParseError(r.offset(), "trailing bytes in PRMT");
    }
  }

  // IMGB
  {
    const Chunk& c = find_chunk(kTagImageBank, "IMGB");
    Reader r(c.payload, c.offset);
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
      const int task_id = static_cast<int>(r.u32());
      std::vector<double> values = r.f32_vec(d);
      try {
        state.image_bank.restore(task_id, std::move(values));
      } catch (const std::exception& e) {
        throw ParseError(c.offset, std::string("bad image bank entry: ") +
                                       e.what());
      }
    }
    if (!r.done()) {
      throw ParseError(r.offset(), "trailing bytes in IMGB");
    }
  }

  // PIXB
  {
    const Chunk& c = find_chunk(kTagPixelBank, "PIXB");
    Reader r(c.payload, c.offset);
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
      const int task_id = static_cast<int>(r.u32());
      const uint32_t rows = r.u32();
      if (rows == 0 || rows > 1u << 20) {
        throw ParseError(r.offset(), "implausible pixel prototype row count");
      }
      std::vector<double> values = r.f32_vec(rows * d);
      try {
        state.pixel_bank.restore(task_id, rows, d, std::move(values));
      } catch (const std::exception& e) {
        throw ParseError(c.offset, std::string("bad pixel bank entry: ") +
                                       e.what());
      }
    }
    if (!r.done()) {
      throw ParseError(r.offset(), "trailing bytes in PIXB");
    }
  }

  // FEAT (optional)
  for (const Chunk& c : chunks) {
    if (c.tag != kTagFeatures) continue;
    Reader r(c.payload, c.offset);
    const uint32_t count = r.u32();
    const std::size_t np = cfg.backbone.num_patches();
    for (uint32_t i = 0; i < count; ++i) {
      StoredFeatures f;
      f.sample_id = r.str();
      f.k_image = r.f32_vec(d);
      f.k_pixels = r.f32_vec(np * d);
      out.features.entries.push_back(std::move(f));
    }
    if (!r.done()) {
      throw ParseError(r.offset(), "trailing bytes in FEAT");
    }
  }

  if (state.prompts.component_count() !=
      cfg.components_per_task * state.completed_tasks) {
    throw ParseError(bytes.size(),
                     "component count does not match task counter");
  }
  if (state.image_bank.size() != state.completed_tasks ||
      state.pixel_bank.size() != state.completed_tasks) {
    throw ParseError(bytes.size(),
                     "prototype bank sizes do not match task counter");
  }
  return out;
}

}  // namespace oner
