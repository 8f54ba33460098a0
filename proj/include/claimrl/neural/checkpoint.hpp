#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "claimrl/neural/adam.hpp"

// Checkpoint archive: 8-byte magic "CLRMCKPT", a little-endian u64 header
// length, a JSON header, then raw little-endian tensor data. The header
// records kind, model config, dtype, and for every tensor its name, shape,
// byte offset (relative to the data section) and byte count.
namespace claimrl::nn {

struct ArchiveTensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;  // widened from the stored dtype
};

struct Archive {
  std::string kind;
  std::string dtype;
  nlohmann::json config;
  std::map<std::string, ArchiveTensor> tensors;
};

template <typename Scalar>
void save_archive(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
                  const std::vector<NamedParameter<Scalar>>& params);

Archive load_archive(const std::filesystem::path& path);

/// Copies archive tensors into params; every name and shape must match.
template <typename Scalar>
void restore_parameters(const Archive& archive, std::vector<NamedParameter<Scalar>>& params);

}  // namespace claimrl::nn
