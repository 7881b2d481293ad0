#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mamlcon/models.hpp"

namespace mamlcon {

/// Meta-learned weights plus what is needed to rebuild and deploy them.
///
/// Stored as a feature archive with n_coeffs = 1: one record per parameter
/// (record id = parameter name, n_frames = element count) and the model
/// configuration in the manifest meta section.
struct Checkpoint {
  ParameterSet params;
  ModelConfig model;
  std::string algorithm;  // "mamlcon" or "oml"
  std::vector<std::pair<std::string, std::string>> extra;  // free-form run metadata
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mamlcon
