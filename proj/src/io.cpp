// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "eegfmri/error.hpp"
#include "eegfmri/models.hpp"
#include "eegfmri/serialization.hpp"

namespace eegfmri {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kTensorMagic[4] = {'E', 'F', 'T', 'N'};
constexpr char kCheckpointMagic[4] = {'E', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((std::uint64_t(v) >> (8 * i)) & 0xFF));
}

void put_double(std::string& out, double d) { put(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return T(v);
  }
  double get_double(const char* what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::FormatError, source_ + " at offset " + std::to_string(pos_) + ": " + msg);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      error(std::string("truncated while reading ") + what + " (" + std::to_string(n) + " bytes needed, " +
            std::to_string(bytes_.size() - pos_) + " left)");
  }
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

Tensor read_tensor_body(Reader& r) {
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kTensorMagic, 4) != 0) r.error("bad tensor magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) r.error("unsupported tensor version " + std::to_string(version));
  const auto rank = r.get<std::uint32_t>("rank");
  if (rank > 16) r.error("implausible rank " + std::to_string(rank));
  Shape shape;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape.push_back(std::size_t(r.get<std::uint64_t>("dimension")));
    n *= shape.back();
  }
  if (n > r.remaining() / 8) r.error("payload shorter than shape " + to_string(shape) + " requires");
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[Eigen::Index(i)] = r.get_double("payload");
  return Tensor(shape, std::move(v));
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::FormatError, path.string() + " at offset " + std::to_string(e.byte) + ": invalid JSON");
  }
}

template <typename T>
T field(const json& j, const char* key, const fs::path& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, path.string() + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FormatError, path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::FormatError, path.string() + ": cannot write");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) fail(ErrorKind::FormatError, path.string() + ": write failed");
}

std::string file_checksum(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

std::string encode_tensor(const Tensor& t) {
  std::string out(kTensorMagic, 4);
  put(out, kVersion);
  put(out, std::uint32_t(t.rank()));
  for (auto d : t.shape()) put(out, std::uint64_t(d));
  out.reserve(out.size() + 8 * t.size());
  for (Eigen::Index i = 0; i < t.data().size(); ++i) put_double(out, t.data()[i]);
  return out;
}

Tensor decode_tensor(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  Tensor t = read_tensor_body(r);
  if (r.remaining() != 0) r.error("trailing bytes after tensor payload");
  return t;
}

void write_tensor(const fs::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

void save_session(const fs::path& root, const RawSession& s) {
  const fs::path dir = root / s.individual_id;
  write_tensor(dir / "eeg.bin", s.eeg.samples);
  write_tensor(dir / "fmri.bin", s.fmri.volumes);
  json meta;
  meta["individual_id"] = s.individual_id;
  meta["sampling_rate_hz"] = s.eeg.sampling_rate_hz;
  meta["tr_seconds"] = s.fmri.tr_seconds;
  meta["fmri_start_seconds"] = s.fmri.start_seconds;
  meta["fmri_log_scaled"] = s.fmri.log_scaled;
  meta["eeg"] = {{"file", "eeg.bin"}, {"checksum", file_checksum(dir / "eeg.bin")}, {"shape", s.eeg.samples.shape()}};
  meta["fmri"] = {
      {"file", "fmri.bin"}, {"checksum", file_checksum(dir / "fmri.bin")}, {"shape", s.fmri.volumes.shape()}};
  write_file(dir / "session.json", meta.dump(2) + "\n");
}

void write_dataset_index(const fs::path& root, const std::vector<std::string>& individuals,
                         const std::string& description) {
  json index;
  index["format"] = "eegfmri-dataset";
  index["version"] = kVersion;
  index["description"] = json::parse(description);
  index["individuals"] = individuals;
  write_file(root / "dataset.json", index.dump(2) + "\n");
}

void save_dataset(const fs::path& root, const std::vector<RawSession>& sessions, const std::string& description) {
  std::vector<std::string> ids;
  for (const auto& s : sessions) {
    save_session(root, s);
    ids.push_back(s.individual_id);
  }
  write_dataset_index(root, ids, description);
}

std::string dataset_description(const fs::path& root) {
  const auto index = read_json(root / "dataset.json");
  return index.contains("description") ? index["description"].dump() : "{}";
}

std::vector<std::string> dataset_individuals(const fs::path& root) {
  const fs::path index_path = root / "dataset.json";
  const auto index = read_json(index_path);
  if (!index.contains("format") || !index["format"].is_string() || index["format"] != "eegfmri-dataset")
    fail(ErrorKind::FormatError, index_path.string() + ": not an eegfmri dataset");
  auto ids = field<std::vector<std::string>>(index, "individuals", index_path);
  if (ids.empty()) fail(ErrorKind::EmptyDataset, index_path.string() + ": no individuals listed");
  return ids;
}

RawSession load_session(const fs::path& root, const std::string& id) {
  const fs::path dir = root / id;
  const fs::path meta_path = dir / "session.json";
  const auto meta = read_json(meta_path);
  auto load = [&](const char* key) {
    if (!meta.contains(key)) fail(ErrorKind::FormatError, meta_path.string() + ": missing '" + key + "'");
    const json& entry = meta.at(key);
    const fs::path file = dir / field<std::string>(entry, "file", meta_path);
    const std::string bytes = read_file(file);
    const std::string sum = hex64(fnv1a64(bytes));
    const auto expected = field<std::string>(entry, "checksum", meta_path);
    if (sum != expected)
      fail(ErrorKind::ChecksumMismatch, file.string() + ": checksum " + sum + " does not match " + expected);
    Tensor t = decode_tensor(bytes, file.string());
    if (t.shape() != field<Shape>(entry, "shape", meta_path))
      fail(ErrorKind::FormatError, file.string() + ": shape " + to_string(t.shape()) + " differs from session.json");
    return t;
  };
  RawSession s;
  s.individual_id = field<std::string>(meta, "individual_id", meta_path);
  s.eeg.sampling_rate_hz = field<double>(meta, "sampling_rate_hz", meta_path);
  s.eeg.samples = load("eeg");
  s.fmri.tr_seconds = field<double>(meta, "tr_seconds", meta_path);
  s.fmri.start_seconds = meta.value("fmri_start_seconds", 0.0);
  s.fmri.log_scaled = meta.value("fmri_log_scaled", false);
  s.fmri.volumes = load("fmri");
  if (s.eeg.samples.rank() != 2 || s.fmri.volumes.rank() != 4)
    fail(ErrorKind::FormatError, dir.string() + ": EEG must be [C, T] and fMRI [T, X, Y, Z]");
  if (!(s.eeg.sampling_rate_hz > 0) || !(s.fmri.tr_seconds > 0))
    fail(ErrorKind::FormatError, meta_path.string() + ": sampling rate and TR must be positive");
  return s;
}

std::vector<RawSession> load_dataset(const fs::path& root) {
  std::vector<RawSession> out;
  for (const auto& id : dataset_individuals(root)) out.push_back(load_session(root, id));
  return out;
}

void save_checkpoint(const fs::path& path, const TrainedModel& model) {
  json header = model_header_to_json(model);
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 4);
  put(out, kVersion);
  put(out, std::uint64_t(h.size()));
  out += h;
  for (const auto& p : model.parameters())
    for (Eigen::Index i = 0; i < p.data().size(); ++i) put_double(out, p.data()[i]);
  write_file(path, out);
}

TrainedModel load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) r.error("bad checkpoint magic");
  if (r.get<std::uint32_t>("version") != kVersion) r.error("unsupported checkpoint version");
  const auto len = r.get<std::uint64_t>("header length");
  const auto text = r.take(std::size_t(len), "header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    r.error("invalid checkpoint header JSON");
  }
  TrainedModel m = model_from_header(header, [&](const Shape& s) {
    Vector v(static_cast<Eigen::Index>(numel(s)));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.get_double("parameter block");
    return Tensor(s, std::move(v), true);
  });
  if (r.remaining() != 0) r.error("trailing bytes after parameter blocks");
  return m;
}

GrayImage slice_image(const Tensor& volume, std::size_t z) {
  if (volume.rank() != 3) fail(ErrorKind::ShapeMismatch, "slice needs a [x, y, z] volume");
  const std::size_t X = volume.dim(0), Y = volume.dim(1), Z = volume.dim(2);
  if (z >= Z) fail(ErrorKind::IndexOutOfRange, "z index " + std::to_string(z) + " outside [0, " + std::to_string(Z) + ")");
  GrayImage img{X, Y, std::vector<std::uint8_t>(X * Y)};
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t x = 0; x < X; ++x)
    for (std::size_t y = 0; y < Y; ++y) {
      const double v = volume[(x * Y + y) * Z + z];
      if (!std::isfinite(v)) fail(ErrorKind::DomainError, "slice contains non-finite voxels");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (std::size_t x = 0; x < X; ++x)
    for (std::size_t y = 0; y < Y; ++y) {
      const double v = volume[(x * Y + y) * Z + z];
      const double g = hi > lo ? std::round(255.0 * (v - lo) / (hi - lo)) : 128.0;
      img.pixels[y * X + x] = std::uint8_t(g);
    }
  return img;
}

void emit_slice(const Tensor& volume, std::size_t z, const fs::path& path) {
  const GrayImage img = slice_image(volume, z);
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  write_file(path, out);
}

GrayImage read_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  if (!in || magic != "P5" || maxv != 255) fail(ErrorKind::FormatError, path.string() + ": not an 8-bit P5 graymap");
  in.get();
  const auto offset = std::size_t(in.tellg());
  if (bytes.size() - offset != w * h)
    fail(ErrorKind::FormatError, path.string() + " at offset " + std::to_string(offset) + ": pixel data size mismatch");
  GrayImage img{w, h, std::vector<std::uint8_t>(bytes.begin() + std::ptrdiff_t(offset), bytes.end())};
  return img;
}

}  // namespace eegfmri
