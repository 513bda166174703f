#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prism/model/policy.hpp"

namespace prism::model {

/// On-disk container: the 8-byte magic "PRISMCK1", a little-endian u32 format
/// version, a u64 header length, a JSON header, then every tensor's float64
/// payload in row-major order. The header lists {name, shape, offset} for each
/// tensor (offset counted in doubles) next to free-form metadata.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, num::Tensor>> tensors;

  bool has(const std::string& name) const;
  const num::Tensor& tensor(const std::string& name) const;
};

/// Writes through a temporary file and renames, so a crash never leaves a
/// truncated checkpoint behind. Throws IoError.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws IoError on a missing file, bad magic, unknown version or short payload.
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

/// meta: {"model": config, "init_seed", "feature_seed"}; tensors: "param/<name>".
Checkpoint policy_checkpoint(const Policy& policy, std::uint64_t init_seed);
/// Rebuilds the policy and copies parameters in. Throws IoError when a
/// parameter is missing or its shape disagrees with the config echo.
Policy restore_policy(const Checkpoint& ckpt);

}  // namespace prism::model
