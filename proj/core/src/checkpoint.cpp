#include "texsds/errors.hpp"
#include "texsds/trainer.hpp"

#include "json_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>

namespace texsds {
namespace {

constexpr char kMagic[8] = {'T', 'X', 'S', 'D', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes.insert(bytes.end(), p, p + values.size_bytes());
  }
  void put_raw(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + size);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end, std::string path)
      : bytes_(bytes), end_(end), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  template <typename T>
  std::vector<T> get_array(std::uint64_t count) {
    if (count > (end_ - pos_) / sizeof(T)) fail("truncated array");
    std::vector<T> out(count);
    std::memcpy(out.data(), take(count * sizeof(T)), count * sizeof(T));
    return out;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > end_ - pos_) fail("truncated");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("corrupt checkpoint " + path_ + ": " + what);
  }
  [[nodiscard]] bool done() const { return pos_ == end_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_state(const std::filesystem::path& path, const TextureField& field, const LossTrace& trace,
                 const AdamState* adam) {
  Writer w;
  w.put_raw(kMagic, sizeof(kMagic));
  w.put(kVersion);
  const std::string header = nlohmann::json{{"field", json_io::to_json(field.config())}}.dump();
  w.put(static_cast<std::uint32_t>(header.size()));
  w.put_raw(header.data(), header.size());

  const auto params = field.parameters();
  w.put(static_cast<std::uint64_t>(params.size()));
  w.put_array(params);
  if (trace.millis.size() != trace.loss.size()) throw InvalidArgument("loss trace columns differ in length");
  w.put(static_cast<std::uint64_t>(trace.loss.size()));
  for (std::size_t i = 0; i < trace.loss.size(); ++i) {
    w.put(trace.loss[i]);
    w.put(trace.millis[i]);
  }
  w.put(static_cast<std::uint64_t>(trace.checkpoints.size()));
  w.put_array(std::span<const std::int64_t>(trace.checkpoints));

  const bool has_adam = adam && !adam->m.empty();
  w.put(static_cast<std::uint8_t>(has_adam ? 1 : 0));
  if (has_adam) {
    if (adam->m.size() != params.size() || adam->v.size() != params.size()) {
      throw InvalidArgument("optimizer state does not match the parameter count");
    }
    w.put(adam->step);
    w.put_array(std::span<const float>(adam->m));
    w.put_array(std::span<const float>(adam->v));
  }
  w.put(crc_of(w.bytes.data(), w.bytes.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  write_state(path, state.field, state.trace, &state.adam);
}

void save_checkpoint(const TextureField& field, const LossTrace& trace, const std::filesystem::path& path) {
  write_state(path, field, trace, nullptr);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint: " + name);
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes.data(), body)) throw CheckpointError("corrupt checkpoint " + name + ": CRC mismatch");

  Reader r(bytes, body, name);
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const auto header_len = r.get<std::uint32_t>();
  const auto* header_bytes = r.take(header_len);

  FieldConfig config;
  try {
    const auto header = nlohmann::json::parse(header_bytes, header_bytes + header_len);
    json_io::ObjectReader top(header, "");
    const auto* field = top.take("field");
    if (!field) r.fail("header has no field config");
    json_io::ObjectReader fr(*field, "field");
    json_io::read_field(fr, config);
    fr.finish();
    top.finish();
    config.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    r.fail(std::string("bad header: ") + e.what());
  }

  const auto n = r.get<std::uint64_t>();
  if (n != config.parameter_count()) r.fail("parameter count does not match the field config");
  auto params = r.get_array<float>(n);

  LossTrace trace;
  const auto steps = r.get<std::uint64_t>();
  const auto pairs = r.get_array<double>(steps > (1ull << 40) ? (1ull << 62) : steps * 2);
  for (std::uint64_t i = 0; i < steps; ++i) {
    trace.loss.push_back(pairs[2 * i]);
    trace.millis.push_back(pairs[2 * i + 1]);
  }
  const auto k = r.get<std::uint64_t>();
  trace.checkpoints = r.get_array<std::int64_t>(k);

  TrainState state(TextureField(config, std::move(params)));
  state.trace = std::move(trace);
  const auto has_adam = r.get<std::uint8_t>();
  if (has_adam > 1) r.fail("bad optimizer flag");
  if (has_adam) {
    state.adam.step = r.get<std::int64_t>();
    state.adam.m = r.get_array<float>(n);
    state.adam.v = r.get_array<float>(n);
  }
  if (!r.done()) r.fail("trailing bytes");
  return state;
}

}  // namespace texsds
