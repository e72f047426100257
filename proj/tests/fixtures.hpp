#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "defnet/data_gen.hpp"
#include "defnet/executor.hpp"
#include "defnet/latent_space.hpp"
#include "defnet/roadmap.hpp"

namespace fixtures {

// The default corpus and everything derived from it, built once per binary.
inline const defnet::Artifacts& default_artifacts() {
  static const defnet::Artifacts art = [] {
    defnet::Artifacts a;
    a.dataset = defnet::build_corpus({});
    a.model = defnet::fit_encoder(a.dataset, defnet::EncoderVariant::FittedPca);
    a.encoded = defnet::encode_dataset(a.model, a.dataset);
    a.bank = defnet::make_bank(a.dataset, a.encoded);
    a.roadmap = defnet::build_lsr(a.encoded, a.bank, defnet::tune_epsilon(a.encoded));
    return a;
  }();
  return art;
}

inline defnet::ClothState goal_state(int tier, std::uint64_t seed) {
  return defnet::rollout_scripted(defnet::goal_library(tier, seed)).goal;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("defnet_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
