#include "ddm2/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ddm2 {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'D', 'M', '2', 'V', 'O', 'L', '1'};

nlohmann::json normalization_to_json(const NormalizationRecord& rec) {
  nlohmann::json j;
  j["mode"] = rec.mode == NormalizationMode::global_minmax ? "global_minmax"
                                                           : "per_volume_percentile";
  j["p_lo"] = rec.p_lo;
  j["p_hi"] = rec.p_hi;
  j["lo"] = rec.lo;
  j["hi"] = rec.hi;
  return j;
}

NormalizationRecord normalization_from_json(const nlohmann::json& j) {
  NormalizationRecord rec;
  std::string mode = j.at("mode").get<std::string>();
  if (mode == "global_minmax")
    rec.mode = NormalizationMode::global_minmax;
  else if (mode == "per_volume_percentile")
    rec.mode = NormalizationMode::per_volume_percentile;
  else
    throw Error(ErrorKind::CorruptHeader, "unknown normalization mode: " + mode);
  rec.p_lo = j.value("p_lo", 0.0);
  rec.p_hi = j.value("p_hi", 100.0);
  rec.lo = j.at("lo").get<std::vector<double>>();
  rec.hi = j.at("hi").get<std::vector<double>>();
  return rec;
}

}  // namespace

void write_container(const std::string& path, const Volume4D& v, const nlohmann::json& extra) {
  if (v.data.size() != v.voxel_count())
    throw Error(ErrorKind::ShapeMismatch, "write_container: data size mismatch");

  nlohmann::json header = extra;
  header["shape"] = {v.w, v.h, v.d, v.l};
  header["spacing"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
  header["source_id"] = v.source_id;
  header["b0_volumes"] = v.b0_volumes;
  header["normalization"] =
      v.normalization ? normalization_to_json(*v.normalization) : nlohmann::json(nullptr);

  std::string hdr = header.dump();
  uint64_t hdr_len = hdr.size();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Internal, "cannot open for writing: " + path);
  f.write(kMagic, 8);
  f.write(reinterpret_cast<const char*>(&hdr_len), 8);
  f.write(hdr.data(), std::streamsize(hdr.size()));

  std::vector<float> payload(v.data.size());
  for (size_t i = 0; i < v.data.size(); i++) payload[i] = float(v.data[i]);
  f.write(reinterpret_cast<const char*>(payload.data()),
          std::streamsize(payload.size() * sizeof(float)));
  if (!f) throw Error(ErrorKind::Internal, "short write: " + path);
}

ContainerFile read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Internal, "cannot open: " + path);

  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw Error(ErrorKind::UnsupportedFormat, "bad magic; not a DDM2VOL1 container: " + path);

  uint64_t hdr_len = 0;
  f.read(reinterpret_cast<char*>(&hdr_len), 8);
  if (!f || hdr_len == 0 || hdr_len > (1ULL << 24))
    throw Error(ErrorKind::CorruptHeader, "implausible header length");

  std::string hdr(hdr_len, '\0');
  f.read(hdr.data(), std::streamsize(hdr_len));
  if (!f) throw Error(ErrorKind::CorruptHeader, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("header is not valid JSON: ") + e.what());
  }

  ContainerFile out;
  try {
    auto shape = header.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) throw Error(ErrorKind::CorruptHeader, "shape must have 4 entries");
    out.volume.w = shape[0];
    out.volume.h = shape[1];
    out.volume.d = shape[2];
    out.volume.l = shape[3];
    auto spacing = header.value("spacing", std::vector<double>{1, 1, 1});
    if (spacing.size() == 3)
      out.volume.spacing = {spacing[0], spacing[1], spacing[2]};
    out.volume.source_id = header.value("source_id", std::string());
    out.volume.b0_volumes = header.value("b0_volumes", std::vector<int>{});
    if (!header.value("normalization", nlohmann::json(nullptr)).is_null())
      out.volume.normalization = normalization_from_json(header["normalization"]);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("bad header field: ") + e.what());
  }

  if (out.volume.w <= 0 || out.volume.h <= 0 || out.volume.d <= 0 || out.volume.l <= 0)
    throw Error(ErrorKind::CorruptHeader, "non-positive shape field");

  size_t count = out.volume.voxel_count();
  std::vector<float> payload(count);
  f.read(reinterpret_cast<char*>(payload.data()), std::streamsize(count * sizeof(float)));
  if (size_t(f.gcount()) != count * sizeof(float))
    throw Error(ErrorKind::CorruptHeader, "truncated payload");

  out.volume.data.resize(count);
  for (size_t i = 0; i < count; i++) out.volume.data[i] = double(payload[i]);
  out.header = std::move(header);
  return out;
}

Volume4D ingest_container(const std::string& path) {
  Volume4D v = read_container(path).volume;
  size_t bad = 0;
  for (double x : v.data)
    if (!std::isfinite(x)) bad++;
  if (bad > 0) throw Error(ErrorKind::NonFiniteData, std::to_string(bad) + " non-finite voxel(s)");
  if (v.source_id.empty()) v.source_id = path;
  return v;
}

}  // namespace ddm2
