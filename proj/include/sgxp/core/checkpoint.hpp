#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "sgxp/core/network.hpp"

namespace sgxp {

struct Checkpoint {
    Network<float> network;
    nlohmann::json metadata;
};

/// "SGXP1", one line of architecture JSON, then each parameter and buffer as a float32
/// little-endian block preceded by its 8-byte byte count.
std::string serialize_checkpoint(const Network<float>& net, const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sgxp
