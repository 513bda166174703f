#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "json.hpp"
#include "prism/bench/push_env.hpp"
#include "prism/trainer/trainer.hpp"

namespace prism::cli {

/// Bad or missing configuration value. The message starts with "section.key".
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::size_t demos = 200;
  std::size_t validation_demos = 20;
  std::optional<std::uint64_t> seed;  // unset: derived from train.seed
  double x0_min = -1.0;
  double x0_max = 1.0;
  std::size_t pad_steps = 8;

  std::uint64_t resolved_seed(std::uint64_t train_seed) const;
};

struct EvalConfig {
  std::size_t seeds = 5;
  std::size_t rollouts = 10;
  std::uint64_t seed = 0;
  std::size_t candidates = 16;
  std::size_t chunk = 4;
  double x0_min = -1.0;
  double x0_max = 1.0;
  std::vector<std::string> selection{"proxy"};
  std::vector<std::string> dropout;  // empty: every single and pair
  std::string proxy_mode = "action";  // or "state"
};

/// Everything a train or eval run reads from its config file.
struct RunConfig {
  trainer::TrainConfig train;
  DataConfig data;
  bench::PushEnvConfig env;
  EvalConfig eval;
};

using Tree = boost::property_tree::ptree;

/// Reads an INI file. Throws IoError when it cannot be read or parsed.
Tree read_config_file(const std::string& path);
Tree read_config_text(const std::string& text);

/// Applies one "section.key=value" override.
void apply_override(Tree& tree, const std::string& assignment);

/// Typed conversion with field-level diagnostics. model.T_o and model.T_p
/// are required when `need_model` is set; unknown keys are rejected.
RunConfig parse_run_config(const Tree& tree, bool need_model = true);

/// Every known key with its resolved value, section by section.
Tree to_tree(const RunConfig& cfg);
std::string to_ini(const RunConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

/// Model streams of the toy environment.
std::vector<model::ModalitySpec> push_modalities();

}  // namespace prism::cli
