#include "ddm2/manifest.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include "ddm2/error.hpp"
#include "ddm2/sha256.hpp"

namespace ddm2 {

RunManifest RunManifest::create(const nlohmann::json& config_snapshot) {
  RunManifest m;
  m.j_["version"] = kToolVersion;
  m.j_["config"] = config_snapshot;
  m.j_["stages"] = nlohmann::json::object();
  m.j_["timestamps"] = nlohmann::json::object();
  return m;
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Internal, "cannot open manifest: " + path);
  RunManifest m;
  try {
    m.j_ = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, std::string("manifest parse: ") + e.what());
  }
  return m;
}

void RunManifest::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Internal, "cannot write manifest: " + path);
  f << j_.dump(2) << '\n';
}

void RunManifest::record_stage(const std::string& stage, const nlohmann::json& fields) {
  j_["stages"][stage] = fields;
  auto now = std::chrono::system_clock::now().time_since_epoch();
  j_["timestamps"][stage] =
      double(std::chrono::duration_cast<std::chrono::milliseconds>(now).count()) / 1000.0;
}

bool RunManifest::stage_verified(const std::string& stage, const std::string& workdir) const {
  if (!j_.contains("stages") || !j_["stages"].contains(stage)) return false;
  const nlohmann::json& s = j_["stages"][stage];
  // every "<name>" with a sibling "<name>_sha256" must still hash the same
  for (auto it = s.begin(); it != s.end(); ++it) {
    if (!it.key().ends_with("_sha256")) continue;
    std::string path_key = it.key().substr(0, it.key().size() - 7);
    if (!s.contains(path_key)) return false;
    std::filesystem::path p = std::filesystem::path(workdir) / s[path_key].get<std::string>();
    if (!std::filesystem::exists(p)) return false;
    if (sha256_file_hex(p.string()) != it->get<std::string>()) return false;
  }
  return true;
}

}  // namespace ddm2
