#pragma once

#include <string>

#include <json.hpp>

#include "ddm2/volume.hpp"

namespace ddm2 {

/// Bit-exact volume container: 8-byte magic "DDM2VOL1", u64 little-endian
/// header length, UTF-8 JSON header {shape:[w,h,d,l], spacing:[...],
/// normalization:{...}}, then float32 little-endian payload in C-order
/// (w fastest). Extra header fields (stage, content, ...) are permitted and
/// round-trip unchanged.
void write_container(const std::string& path, const Volume4D& v,
                     const nlohmann::json& extra = nlohmann::json::object());

struct ContainerFile {
  Volume4D volume;
  nlohmann::json header;
};

ContainerFile read_container(const std::string& path);

/// Loads + validates (finite data, sane shape); the `ingest` entry point for
/// the raw_container format.
Volume4D ingest_container(const std::string& path);

}  // namespace ddm2
