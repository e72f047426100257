#include "defnet/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "defnet/errors.hpp"

namespace defnet {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactMissing("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw ArtifactMissing("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw ArtifactMissing("cannot rename into " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactMissing("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json cloth_config_to_json(const ClothConfig& c) {
  return {{"grid_w", c.grid_w},
          {"grid_h", c.grid_h},
          {"spacing_m", c.spacing_m},
          {"thickness_m", c.thickness_m}};
}

ClothConfig cloth_config_from_json(const json& j) {
  ClothConfig c;
  c.grid_w = j.at("grid_w").get<int>();
  c.grid_h = j.at("grid_h").get<int>();
  c.spacing_m = j.at("spacing_m").get<double>();
  c.thickness_m = j.at("thickness_m").get<double>();
  return c;
}

json state_to_json(const ClothState& s) {
  json pos = json::array();
  for (const auto& p : s.positions) {
    pos.push_back(p.x);
    pos.push_back(p.y);
  }
  return {{"grid_w", s.grid_w},       {"grid_h", s.grid_h},
          {"spacing_m", s.spacing_m}, {"thickness_m", s.thickness_m},
          {"positions", pos},         {"layers", s.layers}};
}

ClothState state_from_json(const json& j) {
  ClothState s;
  s.grid_w = j.at("grid_w").get<int>();
  s.grid_h = j.at("grid_h").get<int>();
  s.spacing_m = j.at("spacing_m").get<double>();
  s.thickness_m = j.at("thickness_m").get<double>();
  const auto& pos = j.at("positions");
  const std::size_t n = static_cast<std::size_t>(s.grid_w) * s.grid_h;
  if (s.grid_w < 2 || s.grid_h < 2 || pos.size() != 2 * n) {
    throw FormatError("state has " + std::to_string(pos.size()) +
                      " coordinates, expected " + std::to_string(2 * n));
  }
  s.positions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.positions[i] = {pos[2 * i].get<double>(), pos[2 * i + 1].get<double>()};
    if (!std::isfinite(s.positions[i].x) || !std::isfinite(s.positions[i].y)) {
      throw FormatError("non-finite particle position");
    }
  }
  s.layers = j.at("layers").get<std::vector<int>>();
  if (s.layers.size() != n) throw FormatError("layer count does not match grid");
  for (int l : s.layers) {
    if (l < 0) throw FormatError("negative layer index");
  }
  return s;
}

json action_to_json(const FoldAction& a) {
  return {{"grasp", {a.grasp.x, a.grasp.y}}, {"place", {a.place.x, a.place.y}}};
}

FoldAction action_from_json(const json& j) {
  const auto& g = j.at("grasp");
  const auto& p = j.at("place");
  return {{g.at(0).get<double>(), g.at(1).get<double>()},
          {p.at(0).get<double>(), p.at(1).get<double>()}};
}

}  // namespace defnet
