#include "ddm2/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ddm2/container.hpp"

namespace ddm2 {

namespace {

template <class T>
T byteswap_val(T v) {
  auto bytes = std::bit_cast<std::array<uint8_t, sizeof(T)>>(v);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

struct Nifti1Header {
  int32_t sizeof_hdr;
  char pad1[36];
  int16_t dim[8];
  char pad2[14];
  int16_t datatype;
  int16_t bitpix;
  int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  char pad3[224];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtFloat32 = 16;

}  // namespace

Volume4D ingest_nifti(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Internal, "cannot open: " + path);

  Nifti1Header hdr;
  f.read(reinterpret_cast<char*>(&hdr), sizeof(hdr));
  if (!f) throw Error(ErrorKind::CorruptHeader, "file shorter than a NIfTI-1 header");

  bool swapped = false;
  if (hdr.sizeof_hdr != 348) {
    if (byteswap_val(hdr.sizeof_hdr) != 348)
      throw Error(ErrorKind::UnsupportedFormat, "not a NIfTI-1 file (sizeof_hdr != 348)");
    swapped = true;
  }
  if (std::memcmp(hdr.magic, "n+1", 3) != 0)
    throw Error(ErrorKind::UnsupportedFormat,
                "unsupported NIfTI magic (only single-file \"n+1\" is handled)");

  auto rd16 = [&](int16_t v) { return swapped ? byteswap_val(v) : v; };
  auto rd32f = [&](float v) { return swapped ? byteswap_val(v) : v; };

  int ndim = rd16(hdr.dim[0]);
  if (ndim != 4)
    throw Error(ErrorKind::CorruptHeader,
                "expected a 4D sequence, got dim[0]=" + std::to_string(ndim));

  Volume4D v;
  v.w = rd16(hdr.dim[1]);
  v.h = rd16(hdr.dim[2]);
  v.d = rd16(hdr.dim[3]);
  v.l = rd16(hdr.dim[4]);
  if (v.w <= 0 || v.h <= 0 || v.d <= 0 || v.l <= 0)
    throw Error(ErrorKind::CorruptHeader, "non-positive dimension");
  v.spacing = {double(rd32f(hdr.pixdim[1])), double(rd32f(hdr.pixdim[2])),
               double(rd32f(hdr.pixdim[3]))};
  v.source_id = path;

  int16_t dtype = rd16(hdr.datatype);
  if (dtype != kDtInt16 && dtype != kDtFloat32)
    throw Error(ErrorKind::UnsupportedFormat,
                "unsupported datatype code " + std::to_string(dtype) + " (need 4 or 16)");

  double slope = double(rd32f(hdr.scl_slope));
  double inter = double(rd32f(hdr.scl_inter));
  if (slope == 0.0) slope = 1.0;  // NIfTI convention: zero slope means unscaled

  long offset = long(rd32f(hdr.vox_offset));
  if (offset < 348) throw Error(ErrorKind::CorruptHeader, "vox_offset before end of header");
  f.seekg(offset, std::ios::beg);

  size_t count = v.voxel_count();
  v.data.resize(count);
  if (dtype == kDtFloat32) {
    std::vector<float> raw(count);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(count * sizeof(float)));
    if (size_t(f.gcount()) != count * sizeof(float))
      throw Error(ErrorKind::CorruptHeader, "truncated voxel data");
    for (size_t i = 0; i < count; i++) {
      float x = swapped ? byteswap_val(raw[i]) : raw[i];
      v.data[i] = slope * double(x) + inter;
    }
  } else {
    std::vector<int16_t> raw(count);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(count * sizeof(int16_t)));
    if (size_t(f.gcount()) != count * sizeof(int16_t))
      throw Error(ErrorKind::CorruptHeader, "truncated voxel data");
    for (size_t i = 0; i < count; i++) {
      int16_t x = swapped ? byteswap_val(raw[i]) : raw[i];
      v.data[i] = slope * double(x) + inter;
    }
  }

  size_t bad = 0;
  for (double x : v.data)
    if (!std::isfinite(x)) bad++;
  if (bad > 0) throw Error(ErrorKind::NonFiniteData, std::to_string(bad) + " non-finite voxel(s)");
  return v;
}

Volume4D ingest(const std::string& path, VolumeFormat format) {
  switch (format) {
    case VolumeFormat::raw_container: return ingest_container(path);
    case VolumeFormat::nifti1: return ingest_nifti(path);
  }
  throw Error(ErrorKind::UnsupportedFormat, "unknown format");
}

}  // namespace ddm2
