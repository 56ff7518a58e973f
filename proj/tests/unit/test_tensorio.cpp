#include <doctest.h>

#include <cstring>
#include <random>

#include "fixtures.hpp"
#include "fuzz.hpp"
#include "wtrk/config.hpp"
#include "wtrk/errors.hpp"
#include "wtrk/tensorio.hpp"

using namespace wtrk;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(std::mt19937_64& rng) {
  const int rank = 1 + static_cast<int>(rng() % kMaxRank);
  std::vector<std::int64_t> dims;
  std::size_t n = 1;
  for (int k = 0; k < rank; ++k) {
    dims.push_back(1 + static_cast<std::int64_t>(rng() % 5));
    n *= static_cast<std::size_t>(dims.back());
  }
  if (rng() % 2) {
    std::vector<float> v(n);
    // Arbitrary bit patterns, NaNs and denormals included.
    for (auto& x : v) {
      const auto bits = static_cast<std::uint32_t>(rng());
      std::memcpy(&x, &bits, 4);
    }
    return Tensor::from_f32(dims, v);
  }
  std::vector<std::uint8_t> v(n);
  for (auto& x : v) x = static_cast<std::uint8_t>(rng());
  return Tensor::from_u8(dims, v);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected wtrk::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("1000 random tensors survive encode/decode and disk bit-exactly") {
  std::mt19937_64 rng(11);
  fixture::TempDir dir("tensor_rt");
  for (int k = 0; k < 1000; ++k) {
    const Tensor t = random_tensor(rng);
    const auto bytes = encode_tensor(t);
    CHECK(decode_tensor(bytes) == t);
    if (k % 50 == 0) {
      write_tensor(dir / "t.wt", t);
      CHECK(read_tensor(dir / "t.wt") == t);
    }
  }
}

TEST_CASE("decode reports the specific failure") {
  const float v[6] = {1, 2, 3, 4, 5, 6};
  const auto good = encode_tensor(Tensor::from_f32({2, 3}, v));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { decode_tensor(bad_magic); }) == ErrorCode::BadMagic);

  auto bad_dtype = good;
  bad_dtype[8] = 9;
  CHECK(code_of([&] { decode_tensor(bad_dtype); }) == ErrorCode::UnsupportedDtype);

  auto short_payload = good;
  short_payload.pop_back();
  CHECK(code_of([&] { decode_tensor(short_payload); }) == ErrorCode::DimMismatch);

  auto huge_dim = good;
  const std::uint64_t big = 1ull << 62;
  std::memcpy(huge_dim.data() + 16, &big, 8);
  CHECK(code_of([&] { decode_tensor(huge_dim); }) == ErrorCode::DimMismatch);

  auto rank0 = good;
  std::memset(rank0.data() + 12, 0, 4);
  CHECK(code_of([&] { decode_tensor(rank0); }) == ErrorCode::DimMismatch);

  CHECK(code_of([&] { read_tensor("/nonexistent/wtrk.wt"); }) == ErrorCode::MissingFile);
}

TEST_CASE("fuzz corpus never escapes as anything but wtrk::Error") {
  for (const auto& bytes : fuzz::tensor_corpus(5, 400)) {
    try {
      const Tensor t = decode_tensor(bytes);
      CHECK(encode_tensor(t) == bytes);  // accepted inputs are canonical
    } catch (const Error&) {
    }
  }
}

TEST_CASE("scene round trip keeps every field") {
  fixture::TempDir dir("scene_rt");
  SynthScene s = generate(fixture::small_dynamic());
  s.scene.config.lambda_ts = 3.5;
  save_scene(dir.path(), s.scene);
  const SceneBundle back = load_scene(dir.path());
  CHECK(back.height == s.scene.height);
  CHECK(back.width == s.scene.width);
  CHECK(back.tracks.num_tracks == s.num_tracks());
  CHECK(back.num_frames() == 8);
  CHECK(back.tracks.visible == s.scene.tracks.visible);
  CHECK(back.masks.values == s.scene.masks.values);
  CHECK(back.depth.values == s.scene.depth.values);
  CHECK(back.config.lambda_ts == 3.5);
  for (std::size_t k = 0; k < back.tracks.positions.size(); ++k) {
    // Stored as f32.
    CHECK((back.tracks.positions[k] - s.scene.tracks.positions[k]).norm() < 1e-4);
  }
  CHECK(back.camera.fx == doctest::Approx(s.scene.camera.fx));
}

TEST_CASE("load_scene rejects single-field corruptions with a specific error") {
  fixture::TempDir base("scene_base");
  fuzz::write_tiny_scene(base.path());
  for (const auto& c : fuzz::scene_cases(3, 0)) {
    CAPTURE(c.name);
    // A valid bundle; the failure surfaces later in the pipeline.
    if (c.name == "zero raw depth") continue;
    fixture::TempDir dir("scene_bad");
    fs::copy(base.path(), dir.path(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    c.apply(dir.path());
    const ErrorCode code = code_of([&] { load_scene(dir.path()); });
    if (c.name.starts_with("delete")) {
      CHECK(code == ErrorCode::MissingFile);
    } else if (c.name.starts_with("reshape")) {
      CHECK(code == ErrorCode::ShapeMismatch);
    } else if (c.name.starts_with("config")) {
      CHECK(code == ErrorCode::InvalidConfig);
    } else {
      CHECK(code == ErrorCode::ShapeMismatch);
    }
  }
}

TEST_CASE("config: defaults, overrides and rejection") {
  const PipelineConfig d = parse_config("{}");
  CHECK(d.stride_s == 4);
  CHECK(d.clip_len == 5);
  CHECK(d.lambda_arap == 100.0);
  CHECK(d.effective_spawn_radius() == 2.0);
  const PipelineConfig o = parse_config(R"({"lambda_asap": 0.5, "max_iters": 7, "solver_method": "rms"})");
  CHECK(o.lambda_asap == 0.5);
  CHECK(o.solver.max_iters == 7);
  CHECK(o.solver.method == SolverMethod::RmsGradient);
  CHECK(parse_config(config_to_json(o)).lambda_asap == 0.5);
  CHECK(code_of([] { parse_config(R"({"stride": 4})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { parse_config(R"({"clip_len": 0})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { parse_config(R"({"tol": "x"})"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("config hash is stable and sensitive") {
  PipelineConfig a, b;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.lambda_ts = 10.0000001;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("poses.json and trajectory tensors round trip") {
  fixture::TempDir dir("poses");
  std::mt19937_64 rng(2);
  std::vector<PoseSE3> poses;
  for (int k = 0; k < 5; ++k) poses.push_back(fixture::random_pose(rng));
  write_poses_json(dir / "poses.json", poses);
  const auto back = read_poses_json(dir / "poses.json");
  REQUIRE(back.size() == poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) {
    CHECK((back[k].matrix() - poses[k].matrix()).norm() < 1e-12);
  }

  std::vector<Vec3> pts = {Vec3(1, 2, 3), Vec3(4, 5, 6), Vec3(-1, 0, 1), Vec3(0.5, 0.25, 8)};
  int n = 0, t = 0;
  const auto got = tensor_to_trajectories(trajectories_to_tensor(pts, 2, 2), n, t);
  CHECK(n == 2);
  CHECK(t == 2);
  CHECK(got == pts);
}
