#pragma once

#include <string>

#include <json.hpp>

#include "defnet/cloth_sim.hpp"

namespace defnet {

/// Writes `contents` to a sibling temp file, then renames it over `path`.
/// Missing parent directories are created.
void write_file_atomic(const std::string& path, const std::string& contents);

/// Reads a whole file. Throws ArtifactMissing when it cannot be opened.
std::string read_file(const std::string& path);

nlohmann::json cloth_config_to_json(const ClothConfig& c);
ClothConfig cloth_config_from_json(const nlohmann::json& j);

/// {"grid_w", "grid_h", "spacing_m", "thickness_m", "positions": [x0, y0, ...],
///  "layers": [...]}
nlohmann::json state_to_json(const ClothState& s);
ClothState state_from_json(const nlohmann::json& j);

nlohmann::json action_to_json(const FoldAction& a);
FoldAction action_from_json(const nlohmann::json& j);

}  // namespace defnet
