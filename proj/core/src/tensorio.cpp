#include "wtrk/tensorio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wtrk/errors.hpp"

namespace wtrk {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are memcpy'd; big-endian hosts need byte swapping");

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::U8: return 1;
  }
  return 0;
}

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return dims.empty() ? 0 : n;
}

Tensor Tensor::from_f32(std::vector<std::int64_t> dims, std::span<const float> values) {
  Tensor t;
  t.dtype = DType::F32;
  t.dims = std::move(dims);
  if (t.element_count() != values.size()) {
    throw Error(ErrorCode::DimMismatch, "value count does not match dims");
  }
  t.payload.resize(values.size() * 4);
  std::memcpy(t.payload.data(), values.data(), t.payload.size());
  return t;
}

Tensor Tensor::from_u8(std::vector<std::int64_t> dims, std::span<const std::uint8_t> values) {
  Tensor t;
  t.dtype = DType::U8;
  t.dims = std::move(dims);
  if (t.element_count() != values.size()) {
    throw Error(ErrorCode::DimMismatch, "value count does not match dims");
  }
  t.payload.assign(values.begin(), values.end());
  return t;
}

std::vector<float> Tensor::to_f32() const {
  if (dtype != DType::F32) throw Error(ErrorCode::UnsupportedDtype, "tensor is not f32");
  std::vector<float> out(payload.size() / 4);
  std::memcpy(out.data(), payload.data(), out.size() * 4);
  return out;
}

std::vector<std::uint8_t> Tensor::to_u8() const {
  if (dtype != DType::U8) throw Error(ErrorCode::UnsupportedDtype, "tensor is not u8");
  return payload;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.dims.empty() || t.dims.size() > kMaxRank) {
    throw Error(ErrorCode::DimMismatch, "rank must be in [1, 4]");
  }
  for (auto d : t.dims) {
    if (d < 1) throw Error(ErrorCode::DimMismatch, "dims must be >= 1");
  }
  if (t.payload.size() != t.element_count() * dtype_size(t.dtype)) {
    throw Error(ErrorCode::DimMismatch, "payload size does not match dims");
  }
  std::vector<std::uint8_t> out(kTensorMagic, kTensorMagic + 8);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  out.insert(out.end(), t.payload.begin(), t.payload.end());
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kTensorMagic, 8) != 0) {
    throw Error(ErrorCode::BadMagic, "missing WTRKTNSR tag");
  }
  if (bytes.size() < 16) throw Error(ErrorCode::DimMismatch, "truncated header");
  const auto dtype_raw = get<std::uint32_t>(bytes, 8);
  if (dtype_raw > 1) {
    throw Error(ErrorCode::UnsupportedDtype, "dtype code " + std::to_string(dtype_raw));
  }
  const auto rank = get<std::uint32_t>(bytes, 12);
  if (rank < 1 || rank > kMaxRank) {
    throw Error(ErrorCode::DimMismatch, "rank " + std::to_string(rank));
  }
  const std::size_t header = 16 + 8 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) throw Error(ErrorCode::DimMismatch, "truncated dims");

  Tensor t;
  t.dtype = static_cast<DType>(dtype_raw);
  const std::size_t available = bytes.size() - header;
  std::size_t count = 1;
  for (std::uint32_t k = 0; k < rank; ++k) {
    const auto d = get<std::uint64_t>(bytes, 16 + 8 * k);
    if (d < 1) throw Error(ErrorCode::DimMismatch, "dim " + std::to_string(k) + " is zero");
    if (d > available || count > available / d) {
      throw Error(ErrorCode::DimMismatch, "dims exceed payload");
    }
    count *= d;
    t.dims.push_back(static_cast<std::int64_t>(d));
  }
  if (count * dtype_size(t.dtype) != available) {
    throw Error(ErrorCode::DimMismatch, "payload holds " + std::to_string(available) +
                                            " bytes, dims need " +
                                            std::to_string(count * dtype_size(t.dtype)));
  }
  t.payload.assign(bytes.begin() + header, bytes.end());
  return t;
}

void write_tensor(const fs::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Tensor read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.filename().string() + ": " + e.what());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

double SceneBundle::image_diagonal() const {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

namespace {

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); }

void expect_dims(const Tensor& t, const char* name, DType dtype,
                 std::initializer_list<std::int64_t> dims) {
  if (t.dtype != dtype) shape_error(std::string(name) + ": wrong dtype");
  if (t.dims != std::vector<std::int64_t>(dims)) {
    std::string got, want;
    for (auto d : t.dims) got += std::to_string(d) + " ";
    for (auto d : dims) want += std::to_string(d) + " ";
    shape_error(std::string(name) + ": dims [" + got + "] expected [" + want + "]");
  }
}

Tensor require_tensor(const fs::path& dir, const char* name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw Error(ErrorCode::MissingFile, p.string());
  return read_tensor(p);
}

}  // namespace

SceneBundle load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, dir.string() + " is not a directory");
  for (const char* name : {"tracks.wt", "visibility.wt", "depth.wt", "masks.wt", "intrinsics.wt",
                           "config.json"}) {
    if (!fs::exists(dir / name)) throw Error(ErrorCode::MissingFile, (dir / name).string());
  }

  SceneBundle s;
  s.config = load_config((dir / "config.json").string());

  const Tensor tracks = require_tensor(dir, "tracks.wt");
  if (tracks.dtype != DType::F32 || tracks.dims.size() != 3 || tracks.dims[2] != 2) {
    shape_error("tracks.wt must be N x T x 2 f32");
  }
  const auto N = tracks.dims[0];
  const auto T = tracks.dims[1];

  const Tensor vis = require_tensor(dir, "visibility.wt");
  expect_dims(vis, "visibility.wt", DType::U8, {N, T});

  const Tensor depth = require_tensor(dir, "depth.wt");
  if (depth.dtype != DType::F32 || depth.dims.size() != 3) shape_error("depth.wt must be T x H x W f32");
  if (depth.dims[0] != T) {
    shape_error("depth.wt has " + std::to_string(depth.dims[0]) + " frames, tracks have " +
                std::to_string(T));
  }
  const auto H = depth.dims[1];
  const auto W = depth.dims[2];

  const Tensor masks = require_tensor(dir, "masks.wt");
  expect_dims(masks, "masks.wt", DType::U8, {T, H, W});

  const Tensor intr = require_tensor(dir, "intrinsics.wt");
  expect_dims(intr, "intrinsics.wt", DType::F32, {3, 3});

  // Optional shape echo in config.json.
  {
    std::ifstream in(dir / "config.json");
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = json::parse(ss.str());
    const std::pair<const char*, std::int64_t> echoes[] = {
        {"num_frames", T}, {"height", H}, {"width", W}, {"num_tracks", N}};
    for (const auto& [key, actual] : echoes) {
      if (auto it = j.find(key); it != j.end()) {
        if (!it->is_number_integer() || it->get<std::int64_t>() != actual) {
          shape_error(std::string("config.json ") + key + " disagrees with tensors");
        }
      }
    }
  }

  s.height = static_cast<int>(H);
  s.width = static_cast<int>(W);

  const auto k = intr.to_f32();
  Mat3 K;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) K(r, c) = k[r * 3 + c];
  s.camera = CameraModel::from_matrix(K);
  if (!s.camera.valid() || !std::isfinite(s.camera.cx) || !std::isfinite(s.camera.cy)) {
    shape_error("intrinsics.wt: focal lengths must be positive and finite");
  }

  s.tracks = TrackSet2D(static_cast<int>(N), static_cast<int>(T));
  const auto pos = tracks.to_f32();
  const auto v = vis.to_u8();
  for (std::size_t i = 0; i < static_cast<std::size_t>(N * T); ++i) {
    s.tracks.positions[i] = Vec2(pos[2 * i], pos[2 * i + 1]);
    if (v[i] > 1) shape_error("visibility.wt values must be 0 or 1");
    s.tracks.visible[i] = v[i];
  }
  s.tracks.infer_spawn_frames();
  for (int i = 0; i < s.tracks.num_tracks; ++i) {
    if (s.tracks.visible_count(i) == 0) {
      shape_error("track " + std::to_string(i) + " is never visible");
    }
    for (int t = 0; t < s.tracks.num_frames; ++t) {
      if (s.tracks.vis(i, t) && !s.tracks.pos(i, t).allFinite()) {
        shape_error("track " + std::to_string(i) + " has a non-finite visible position");
      }
    }
    const Vec2& p = s.tracks.pos(i, s.tracks.spawn_frame[i]);
    if (!(p.x() >= 0.0 && p.x() < W && p.y() >= 0.0 && p.y() < H)) {
      shape_error("track " + std::to_string(i) + " spawns outside the image");
    }
  }

  s.depth = DepthStack(static_cast<int>(T), s.height, s.width);
  s.depth.values = depth.to_f32();
  s.masks = MaskStack(static_cast<int>(T), s.height, s.width);
  s.masks.values = masks.to_u8();

  if (fs::exists(dir / "track_depth.wt")) {
    const Tensor td = read_tensor(dir / "track_depth.wt");
    expect_dims(td, "track_depth.wt", DType::F32, {N, T});
    const auto d = td.to_f32();
    s.track_depth = TrackDepths(static_cast<int>(N), static_cast<int>(T));
    for (std::size_t i = 0; i < d.size(); ++i) s.track_depth.values[i] = d[i];
  } else {
    s.track_depth = sample_track_depths(s.tracks, s.depth);
  }
  return s;
}

void save_scene(const fs::path& dir, const SceneBundle& s, bool write_track_depth) {
  fs::create_directories(dir);
  const auto N = static_cast<std::int64_t>(s.tracks.num_tracks);
  const auto T = static_cast<std::int64_t>(s.tracks.num_frames);
  std::vector<float> pos(static_cast<std::size_t>(N * T * 2));
  for (std::size_t i = 0; i < static_cast<std::size_t>(N * T); ++i) {
    pos[2 * i] = static_cast<float>(s.tracks.positions[i].x());
    pos[2 * i + 1] = static_cast<float>(s.tracks.positions[i].y());
  }
  write_tensor(dir / "tracks.wt", Tensor::from_f32({N, T, 2}, pos));
  write_tensor(dir / "visibility.wt", Tensor::from_u8({N, T}, s.tracks.visible));
  write_tensor(dir / "depth.wt", Tensor::from_f32({T, s.height, s.width}, s.depth.values));
  write_tensor(dir / "masks.wt", Tensor::from_u8({T, s.height, s.width}, s.masks.values));
  const Mat3 K = s.camera.matrix();
  std::vector<float> k(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) k[r * 3 + c] = static_cast<float>(K(r, c));
  write_tensor(dir / "intrinsics.wt", Tensor::from_f32({3, 3}, k));
  if (write_track_depth && !s.track_depth.values.empty()) {
    std::vector<float> d(s.track_depth.values.begin(), s.track_depth.values.end());
    write_tensor(dir / "track_depth.wt", Tensor::from_f32({N, T}, d));
  }
  json j = json::parse(config_to_json(s.config));
  j["num_frames"] = T;
  j["height"] = s.height;
  j["width"] = s.width;
  j["num_tracks"] = N;
  write_text_atomic(dir / "config.json", j.dump(2) + "\n");
}

void write_poses_json(const fs::path& path, std::span<const PoseSE3> poses) {
  json arr = json::array();
  for (const auto& p : poses) {
    const Mat34 m = p.matrix();
    json row = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    arr.push_back(row);
  }
  json j = {{"convention", "world_to_camera"}, {"poses", arr}};
  write_text_atomic(path, j.dump(2) + "\n");
}

std::vector<PoseSE3> read_poses_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": " + e.what());
  }
  if (!j.contains("poses") || !j["poses"].is_array()) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": missing 'poses' array");
  }
  std::vector<PoseSE3> out;
  for (const auto& row : j["poses"]) {
    if (!row.is_array() || row.size() != 12) {
      throw Error(ErrorCode::ShapeMismatch, path.string() + ": each pose needs 12 numbers");
    }
    Mat34 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = row[r * 4 + c].get<double>();
    out.push_back(PoseSE3::from_matrix(m));
  }
  return out;
}

Tensor trajectories_to_tensor(std::span<const Vec3> points, int n, int t) {
  std::vector<float> v(static_cast<std::size_t>(n) * t * 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    v[3 * i] = static_cast<float>(points[i].x());
    v[3 * i + 1] = static_cast<float>(points[i].y());
    v[3 * i + 2] = static_cast<float>(points[i].z());
  }
  return Tensor::from_f32({n, t, 3}, v);
}

std::vector<Vec3> tensor_to_trajectories(const Tensor& tensor, int& n, int& t) {
  if (tensor.dtype != DType::F32 || tensor.dims.size() != 3 || tensor.dims[2] != 3) {
    throw Error(ErrorCode::ShapeMismatch, "trajectory tensor must be N x T x 3 f32");
  }
  n = static_cast<int>(tensor.dims[0]);
  t = static_cast<int>(tensor.dims[1]);
  const auto v = tensor.to_f32();
  std::vector<Vec3> out(static_cast<std::size_t>(n) * t);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return out;
}

}  // namespace wtrk
