#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "ddm2/container.hpp"
#include "ddm2/nifti.hpp"
#include "ddm2/volume.hpp"

using namespace ddm2;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
  fs::path p = fs::temp_directory_path() / "ddm2_test_volume";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// minimal NIfTI-1 writer used only to exercise the reader
void write_nifti(const fs::path& path, int16_t ndim, int16_t w, int16_t h, int16_t d, int16_t l,
                 int16_t datatype, float slope, float inter, const std::vector<float>& fdata,
                 const std::vector<int16_t>& idata) {
  std::vector<char> hdr(352, 0);  // 348 + 4 padding to vox_offset=352
  auto put32 = [&](size_t off, int32_t v) { std::memcpy(&hdr[off], &v, 4); };
  auto put16 = [&](size_t off, int16_t v) { std::memcpy(&hdr[off], &v, 2); };
  auto putf = [&](size_t off, float v) { std::memcpy(&hdr[off], &v, 4); };
  put32(0, 348);
  put16(40, ndim);
  put16(42, w);
  put16(44, h);
  put16(46, d);
  put16(48, l);
  for (int i = 5; i < 8; i++) put16(size_t(40 + 2 * i + 2), 1);
  put16(70, datatype);
  put16(72, datatype == 16 ? 32 : 16);
  putf(80, 2.0f);  // pixdim[1..3]
  putf(84, 2.0f);
  putf(88, 3.5f);
  putf(108, 352.0f);  // vox_offset
  putf(112, slope);
  putf(116, inter);
  std::memcpy(&hdr[344], "n+1\0", 4);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(hdr.data(), std::streamsize(hdr.size()));
  if (datatype == 16)
    f.write(reinterpret_cast<const char*>(fdata.data()),
            std::streamsize(fdata.size() * sizeof(float)));
  else
    f.write(reinterpret_cast<const char*>(idata.data()),
            std::streamsize(idata.size() * sizeof(int16_t)));
}

}  // namespace

TEST_CASE("raw container: all-zero 4D volume ingests with 768 voxels") {
  fs::path p = tmpdir() / "zeros.vol";
  Volume4D v(8, 8, 4, 3);
  write_container(p.string(), v);
  Volume4D r = ingest(p.string(), VolumeFormat::raw_container);
  CHECK(r.voxel_count() == 768);
  for (double x : r.data) CHECK(x == 0.0);
  CHECK(r.w == 8);
  CHECK(r.l == 3);
}

TEST_CASE("raw container: export(ingest(f)) is byte-identical") {
  fs::path p1 = tmpdir() / "rt1.vol";
  fs::path p2 = tmpdir() / "rt2.vol";
  std::mt19937_64 rng(7);
  std::normal_distribution<float> g(0.f, 1.f);
  Volume4D v(5, 7, 3, 4);
  v.spacing = {0.5, 0.5, 2.0};
  v.source_id = "roundtrip";
  for (double& x : v.data) x = double(g(rng));  // float-representable values
  write_container(p1.string(), v);
  Volume4D r = ingest_container(p1.string());
  write_container(p2.string(), r);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("raw container: corrupt magic and truncation are rejected") {
  fs::path p = tmpdir() / "bad.vol";
  {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << "NOTAVOL1garbage";
  }
  CHECK_THROWS_AS(read_container(p.string()), Error);
  try {
    read_container(p.string());
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedFormat);
  }
}

TEST_CASE("ingest rejects non-finite voxels with a count") {
  fs::path p = tmpdir() / "nan.vol";
  Volume4D v(4, 4, 2, 2);
  v.data[3] = std::numeric_limits<double>::quiet_NaN();
  v.data[10] = std::numeric_limits<double>::infinity();
  write_container(p.string(), v);
  try {
    ingest_container(p.string());
    FAIL("expected NonFiniteData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteData);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("nifti: 3D file is rejected") {
  fs::path p = tmpdir() / "threed.nii";
  write_nifti(p, 3, 4, 4, 4, 1, 16, 1.f, 0.f, std::vector<float>(64, 1.f), {});
  try {
    ingest_nifti(p.string());
    FAIL("expected CorruptHeader");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptHeader);
  }
}

TEST_CASE("nifti: float32 voxels, scl_slope/scl_inter honored") {
  fs::path p = tmpdir() / "f32.nii";
  std::vector<float> data(4 * 3 * 2 * 2);
  for (size_t i = 0; i < data.size(); i++) data[i] = float(i);
  write_nifti(p, 4, 4, 3, 2, 2, 16, 2.0f, 10.0f, data, {});
  Volume4D v = ingest_nifti(p.string());
  CHECK(v.w == 4);
  CHECK(v.h == 3);
  CHECK(v.d == 2);
  CHECK(v.l == 2);
  CHECK(v.spacing[2] == doctest::Approx(3.5));
  CHECK(v.data[5] == doctest::Approx(2.0 * 5 + 10.0));
}

TEST_CASE("nifti: int16 datatype converted, zero slope treated as one") {
  fs::path p = tmpdir() / "i16.nii";
  std::vector<int16_t> data(4 * 4 * 2 * 2);
  for (size_t i = 0; i < data.size(); i++) data[i] = int16_t(i * 3);
  write_nifti(p, 4, 4, 4, 2, 2, 4, 0.0f, 0.0f, {}, data);
  Volume4D v = ingest_nifti(p.string());
  CHECK(v.data[7] == doctest::Approx(21.0));
}

TEST_CASE("nifti: unsupported datatype") {
  fs::path p = tmpdir() / "dt.nii";
  write_nifti(p, 4, 2, 2, 2, 2, 64, 1.f, 0.f, std::vector<float>(16, 0.f), {});
  try {
    ingest_nifti(p.string());
    FAIL("expected UnsupportedFormat");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedFormat);
  }
}

TEST_CASE("normalize: midpoint maps to zero under global_minmax") {
  Volume4D v(2, 2, 1, 2);
  v.data = {0, 200, 100, 50, 25, 75, 125, 175};
  Volume4D n = normalize(v, NormalizationMode::global_minmax);
  CHECK(n.data[2] == 0.0);  // voxel 100 with range [0, 200]
  for (double x : n.data) {
    CHECK(x >= -1.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("normalize: constant volume maps to zeros with a warning") {
  Volume4D v(3, 3, 1, 2, 7.0);
  std::vector<std::string> warnings;
  Volume4D n = normalize(v, NormalizationMode::global_minmax, 1, 99, &warnings);
  for (double x : n.data) CHECK(x == 0.0);
  CHECK(warnings.size() == 1);
  Volume4D back = denormalize(n);
  for (double x : back.data) CHECK(x == doctest::Approx(7.0));
}

TEST_CASE("normalize: denormalize(normalize(v)) within 1e-6 relative error") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(5.0, 300.0);
  Volume4D v(6, 5, 4, 3);
  for (double& x : v.data) x = u(rng);
  Volume4D back = denormalize(normalize(v, NormalizationMode::global_minmax));
  double max_rel = 0;
  for (size_t i = 0; i < v.data.size(); i++)
    max_rel = std::max(max_rel, std::abs(back.data[i] - v.data[i]) / std::abs(v.data[i]));
  CHECK(max_rel < 1e-6);
}

TEST_CASE("normalize: repeated normalization is an error") {
  Volume4D v(2, 2, 1, 2);
  for (size_t i = 0; i < v.data.size(); i++) v.data[i] = double(i);
  Volume4D n = normalize(v, NormalizationMode::global_minmax);
  CHECK_THROWS_AS(normalize(n, NormalizationMode::global_minmax), Error);
}

TEST_CASE("normalize: percentile mode clamps to [-1,1] and inverts inside bounds") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  Volume4D v(8, 8, 2, 3);
  for (double& x : v.data) x = u(rng);
  Volume4D n = normalize(v, NormalizationMode::per_volume_percentile, 5, 95);
  for (double x : n.data) {
    CHECK(x >= -1.0);
    CHECK(x <= 1.0);
  }
  CHECK(n.normalization->lo.size() == 3);
}

TEST_CASE("slice pairs: l=3 adjacent priors for middle target") {
  Volume4D v(4, 4, 2, 3, 1.0);
  auto pairs = make_slice_pairs(v, 2, PriorStrategy::adjacent_directions);
  for (const auto& p : pairs)
    if (p.volume_index == 1) CHECK(p.prior_volumes == std::vector<int>{0, 2});
}

TEST_CASE("slice pairs: wrap-around ring order for l=5, target 0") {
  Volume4D v(4, 4, 1, 5, 1.0);
  auto pairs = make_slice_pairs(v, 2, PriorStrategy::adjacent_directions);
  CHECK(pairs[0].volume_index == 0);
  CHECK(pairs[0].prior_volumes == std::vector<int>{4, 1});
}

TEST_CASE("slice pairs: n > l-1 is TooFewVolumes") {
  Volume4D v(4, 4, 1, 2, 1.0);
  CHECK_THROWS_AS(make_slice_pairs(v, 2, PriorStrategy::adjacent_directions), Error);
}

TEST_CASE("slice pairs: blindness and exact coverage for both strategies") {
  Volume4D v(4, 4, 3, 6, 1.0);
  for (auto strategy : {PriorStrategy::adjacent_directions, PriorStrategy::random_directions}) {
    auto pairs = make_slice_pairs(v, 3, strategy, 99);
    CHECK(pairs.size() == size_t(v.d) * v.l);
    std::vector<int> seen(size_t(v.d) * v.l, 0);
    for (const auto& p : pairs) {
      seen[size_t(p.volume_index) * v.d + p.slice_index]++;
      CHECK(int(p.prior_volumes.size()) == 3);
      for (int prior : p.prior_volumes) CHECK(prior != p.volume_index);
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("slice pairs: random strategy reproducible under the same seed") {
  Volume4D v(4, 4, 2, 6, 1.0);
  auto a = make_slice_pairs(v, 2, PriorStrategy::random_directions, 42);
  auto b = make_slice_pairs(v, 2, PriorStrategy::random_directions, 42);
  auto c = make_slice_pairs(v, 2, PriorStrategy::random_directions, 43);
  bool same = true, differs = false;
  for (size_t i = 0; i < a.size(); i++) {
    same = same && a[i].prior_volumes == b[i].prior_volumes;
    differs = differs || a[i].prior_volumes != c[i].prior_volumes;
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("slice pairs: b0 volumes excluded from priors by default") {
  Volume4D v(4, 4, 1, 5, 1.0);
  v.b0_volumes = {2};
  auto pairs = make_slice_pairs(v, 2, PriorStrategy::adjacent_directions);
  for (const auto& p : pairs)
    for (int prior : p.prior_volumes) CHECK(prior != 2);
  // exclusion can leave too few candidates
  v.b0_volumes = {1, 2, 3};
  CHECK_THROWS_AS(make_slice_pairs(v, 2, PriorStrategy::adjacent_directions), Error);
  // overridable
  auto loose = make_slice_pairs(v, 2, PriorStrategy::adjacent_directions, 0, false);
  CHECK(loose.size() == 5);
}

TEST_CASE("validate: single-volume sequences are rejected") {
  Volume4D v(4, 4, 2, 1, 1.0);
  CHECK_THROWS_AS(v.validate(), Error);
}
