#pragma once

#include <string>

#include <json.hpp>

namespace ddm2 {

inline constexpr const char* kToolVersion = "0.1.0";

/// Run manifest: config snapshot plus per-stage artifact fingerprints.
/// Volatile data (wall-clock completion times) lives under a single
/// "timestamps" key so manifests are byte-comparable without it.
class RunManifest {
 public:
  static RunManifest create(const nlohmann::json& config_snapshot);
  static RunManifest load(const std::string& path);
  void save(const std::string& path) const;

  /// Records a completed stage: `fields` should reference every artifact by
  /// path + sha256.
  void record_stage(const std::string& stage, const nlohmann::json& fields);

  /// True when the stage was recorded and all its artifact hashes still
  /// match the files on disk.
  bool stage_verified(const std::string& stage, const std::string& workdir) const;

  const nlohmann::json& json() const { return j_; }
  nlohmann::json& json() { return j_; }
  nlohmann::json config() const { return j_.value("config", nlohmann::json::object()); }

 private:
  nlohmann::json j_;
};

}  // namespace ddm2
