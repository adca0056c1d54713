#include "ddm2/denoiser.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ddm2/sha256.hpp"

namespace ddm2 {

nn::UNetConfig unet_config_from_spec(const DenoiserSpec& spec) {
  nn::UNetConfig cfg;
  cfg.in_channels = spec.in_channels;
  cfg.out_channels = spec.out_channels;
  cfg.depth = spec.depth;
  cfg.base_width = spec.base_width;
  cfg.embed_dim = spec.embed_dim;
  cfg.conditioned = spec.conditioning == Conditioning::noise_level_scalar;
  return cfg;
}

NetDenoiser::NetDenoiser(const DenoiserSpec& spec, uint64_t seed)
    : spec_(spec), seed_(seed), net_(unet_config_from_spec(spec), seed) {}

nn::Tensor stack_slices(const std::vector<std::vector<Image>>& batch_channels,
                        int pad_multiple_of) {
  if (batch_channels.empty() || batch_channels[0].empty())
    throw Error(ErrorKind::ShapeMismatch, "empty batch");
  int rows = batch_channels[0][0].rows, cols = batch_channels[0][0].cols;
  std::vector<double> padded;
  int prows = 0, pcols = 0;
  nn::pad_multiple(batch_channels[0][0].v, rows, cols, pad_multiple_of, padded, prows, pcols);

  nn::Tensor t(int(batch_channels.size()), int(batch_channels[0].size()), prows, pcols);
  for (size_t i = 0; i < batch_channels.size(); i++) {
    if (int(batch_channels[i].size()) != t.c)
      throw Error(ErrorKind::ShapeMismatch, "inconsistent channel count in batch");
    for (size_t c = 0; c < batch_channels[i].size(); c++) {
      const Image& img = batch_channels[i][c];
      if (img.rows != rows || img.cols != cols)
        throw Error(ErrorKind::ShapeMismatch, "inconsistent slice shape in batch");
      nn::pad_multiple(img.v, rows, cols, pad_multiple_of, padded, prows, pcols);
      std::copy(padded.begin(), padded.end(),
                t.sample(int(i)) + size_t(c) * t.plane());
    }
  }
  return t;
}

Image NetDenoiser::apply(const std::vector<Image>& inputs,
                         std::optional<double> noise_level) const {
  if (int(inputs.size()) != spec_.in_channels)
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(spec_.in_channels) +
                                              " input slices, got " +
                                              std::to_string(inputs.size()));
  for (const Image& img : inputs) require_same_shape(inputs[0], img, "apply inputs");

  if (conditioned()) {
    if (!noise_level)
      throw Error(ErrorKind::MissingCondition, "conditioned denoiser needs a noise level");
    if (!(*noise_level > 0.0 && *noise_level <= 1.0))
      throw Error(ErrorKind::StateOutOfRange, "noise level must lie in (0, 1]");
  } else if (noise_level) {
    throw Error(ErrorKind::UnexpectedCondition, "unconditioned denoiser given a noise level");
  }

  int m = 1 << (spec_.depth - 1);
  nn::Tensor x = stack_slices({inputs}, m);
  std::vector<double> levels;
  if (conditioned()) levels.push_back(*noise_level);
  nn::Tensor y = net_.forward(x, conditioned() ? &levels : nullptr, nullptr);

  Image out(inputs[0].rows, inputs[0].cols);
  for (int r = 0; r < out.rows; r++)
    std::copy(y.v.begin() + size_t(r) * y.w, y.v.begin() + size_t(r) * y.w + out.cols,
              out.v.begin() + size_t(r) * out.cols);
  if (!out.finite()) throw Error(ErrorKind::NonFiniteState, "denoiser produced non-finite output");
  return out;
}

std::string NetDenoiser::fingerprint() const {
  Sha256 h;
  for (const auto& p : net_.params().all()) {
    std::vector<float> blob(p.size());
    for (size_t i = 0; i < p.size(); i++) blob[i] = float(p.w[i]);
    h.update(blob.data(), blob.size() * sizeof(float));
  }
  return hex_string(h.digest());
}

namespace {

constexpr char kCkptMagic[8] = {'D', 'D', 'M', '2', 'C', 'K', 'P', 'T'};

nlohmann::json spec_to_json(const DenoiserSpec& s) {
  return {{"in_channels", s.in_channels},
          {"out_channels", s.out_channels},
          {"depth", s.depth},
          {"base_width", s.base_width},
          {"embed_dim", s.embed_dim},
          {"conditioning",
           s.conditioning == Conditioning::noise_level_scalar ? "noise_level_scalar" : "none"}};
}

DenoiserSpec spec_from_json(const nlohmann::json& j) {
  DenoiserSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
  s.depth = j.at("depth").get<int>();
  s.base_width = j.at("base_width").get<int>();
  s.embed_dim = j.at("embed_dim").get<int>();
  std::string cond = j.at("conditioning").get<std::string>();
  if (cond == "noise_level_scalar")
    s.conditioning = Conditioning::noise_level_scalar;
  else if (cond == "none")
    s.conditioning = Conditioning::none;
  else
    throw Error(ErrorKind::CorruptHeader, "unknown conditioning: " + cond);
  return s;
}

template <class T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void NetDenoiser::save(const std::string& path) const {
  std::string buf;
  buf.append(kCkptMagic, 8);

  nlohmann::json manifest = {{"spec", spec_to_json(spec_)},
                             {"train_steps", train_steps_},
                             {"seed", seed_},
                             {"param_hash", fingerprint()}};
  std::string mjson = manifest.dump();
  put(buf, uint64_t(mjson.size()));
  buf.append(mjson);

  const auto& params = net_.params().all();
  put(buf, uint32_t(params.size()));
  for (const auto& p : params) {
    put(buf, uint32_t(p.name.size()));
    buf.append(p.name);
    put(buf, uint32_t(p.shape.size()));
    for (int d : p.shape) put(buf, uint32_t(d));
    std::vector<float> blob(p.size());
    for (size_t i = 0; i < p.size(); i++) blob[i] = float(p.w[i]);
    put(buf, uint64_t(blob.size() * sizeof(float)));
    buf.append(reinterpret_cast<const char*>(blob.data()), blob.size() * sizeof(float));
  }

  Sha256 h;
  h.update(buf.data(), buf.size());
  auto digest = h.digest();
  buf.append(reinterpret_cast<const char*>(digest.data()), digest.size());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Internal, "cannot open for writing: " + path);
  f.write(buf.data(), std::streamsize(buf.size()));
  if (!f) throw Error(ErrorKind::Internal, "short write: " + path);
}

NetDenoiser NetDenoiser::load(const std::string& path, const DenoiserSpec* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Internal, "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < 8 + 8 + 32 || std::memcmp(buf.data(), kCkptMagic, 8) != 0)
    throw Error(ErrorKind::UnsupportedFormat, "not a DDM2CKPT checkpoint: " + path);

  {
    Sha256 h;
    h.update(buf.data(), buf.size() - 32);
    auto digest = h.digest();
    if (std::memcmp(digest.data(), buf.data() + buf.size() - 32, 32) != 0)
      throw Error(ErrorKind::HashMismatch, "checkpoint integrity trailer does not match");
  }

  size_t pos = 8;
  auto take = [&](void* dst, size_t n) {
    if (pos + n > buf.size() - 32) throw Error(ErrorKind::CorruptHeader, "truncated checkpoint");
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  };

  uint64_t mlen = 0;
  take(&mlen, 8);
  if (pos + mlen > buf.size() - 32) throw Error(ErrorKind::CorruptHeader, "bad manifest length");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.substr(pos, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("manifest parse: ") + e.what());
  }
  pos += mlen;

  DenoiserSpec spec = spec_from_json(manifest.at("spec"));
  if (expected != nullptr && !(spec == *expected))
    throw Error(ErrorKind::SpecMismatch, "checkpoint spec differs from the expected spec");

  NetDenoiser out(spec, manifest.value("seed", uint64_t(0)));
  out.train_steps_ = manifest.value("train_steps", 0L);

  uint32_t count = 0;
  take(&count, 4);
  auto& params = out.net_.params().all();
  if (count != params.size())
    throw Error(ErrorKind::SpecMismatch, "checkpoint parameter count does not match spec");

  for (uint32_t i = 0; i < count; i++) {
    uint32_t name_len = 0;
    take(&name_len, 4);
    std::string name(name_len, '\0');
    take(name.data(), name_len);
    uint32_t ndim = 0;
    take(&ndim, 4);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; d++) {
      uint32_t s = 0;
      take(&s, 4);
      shape[d] = int(s);
    }
    uint64_t nbytes = 0;
    take(&nbytes, 8);
    nn::Param& p = params[i];
    if (name != p.name || shape != p.shape || nbytes != p.size() * sizeof(float))
      throw Error(ErrorKind::SpecMismatch, "blob \"" + name + "\" does not match spec layout");
    std::vector<float> blob(p.size());
    take(blob.data(), nbytes);
    for (size_t k = 0; k < p.size(); k++) p.w[k] = double(blob[k]);
  }

  std::string expected_hash = manifest.value("param_hash", std::string());
  if (!expected_hash.empty() && out.fingerprint() != expected_hash)
    throw Error(ErrorKind::HashMismatch, "parameter hash does not match manifest");
  return out;
}

}  // namespace ddm2
