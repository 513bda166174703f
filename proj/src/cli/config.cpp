#include "prism/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "prism/numerics/errors.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::cli {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  std::string section;
  std::string key;
  bool required = false;
  Setter set;
  Getter get;
  std::string path() const { return section + "." + key; }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_value(const std::string& path, const std::string& raw) {
  const std::string s = trim(raw);
  if constexpr (std::is_same_v<T, bool>) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(path + ": expected true or false, got '" + raw + "'");
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      const char* what = std::is_floating_point_v<T> ? "a number" : "a non-negative integer";
      throw ConfigError(path + ": expected " + what + ", got '" + raw + "'");
    }
    return v;
  }
}

template <class T>
std::string print_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return fmt_double(v);
  } else {
    return std::to_string(v);
  }
}

template <class T, class Access>
Field typed(std::string section, std::string key, Access access, bool required = false) {
  const std::string path = section + "." + key;
  return {std::move(section), std::move(key), required,
          [access, path](RunConfig& c, const std::string& raw) { access(c) = parse_value<T>(path, raw); },
          [access](const RunConfig& c) { return print_value<T>(access(const_cast<RunConfig&>(c))); }};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

#define PRISM_ACCESS(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // [model]
    f.push_back(typed<std::size_t>("model", "T_o", PRISM_ACCESS(train.model.obs_horizon), true));
    f.push_back(typed<std::size_t>("model", "T_p", PRISM_ACCESS(train.model.pred_horizon), true));
    f.push_back(typed<std::size_t>("model", "width", PRISM_ACCESS(train.model.width)));
    f.push_back(typed<std::size_t>("model", "latent_dim", PRISM_ACCESS(train.model.latent_dim)));
    f.push_back(typed<std::size_t>("model", "layers", PRISM_ACCESS(train.model.layers)));
    f.push_back(typed<std::size_t>("model", "ff_hidden", PRISM_ACCESS(train.model.ff_hidden)));
    f.push_back(typed<std::size_t>("model", "modality_hidden", PRISM_ACCESS(train.model.modality_hidden)));
    f.push_back(typed<std::size_t>("model", "modality_embed", PRISM_ACCESS(train.model.modality_embed)));
    f.push_back(typed<std::size_t>("model", "fusion_hidden", PRISM_ACCESS(train.model.fusion_hidden)));
    f.push_back(typed<std::size_t>("model", "heads", PRISM_ACCESS(train.model.attention.heads)));
    f.push_back(typed<std::size_t>("model", "features", PRISM_ACCESS(train.model.attention.features)));
    f.push_back(typed<double>("model", "denom_floor", PRISM_ACCESS(train.model.attention.denom_floor)));
    f.push_back(typed<bool>("model", "scale_logits", PRISM_ACCESS(train.model.attention.scale_logits)));
    f.push_back({"model", "key_stabilization", false,
                 [](RunConfig& c, const std::string& raw) {
                   const std::string s = trim(raw);
                   if (s == "unbiased") c.train.model.attention.key_stabilization = linattn::KeyStabilization::kUnbiased;
                   else if (s == "rowmax") c.train.model.attention.key_stabilization = linattn::KeyStabilization::kRowMax;
                   else throw ConfigError("model.key_stabilization: expected unbiased or rowmax, got '" + raw + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.train.model.attention.key_stabilization == linattn::KeyStabilization::kUnbiased
                                          ? "unbiased"
                                          : "rowmax");
                 }});
    // [train]
    f.push_back({"train", "objective", false,
                 [](RunConfig& c, const std::string& raw) {
                   try {
                     c.train.objective = trainer::parse_objective(trim(raw));
                   } catch (const DomainError&) {
                     throw ConfigError("train.objective: expected batch_global, per_sample or mse_bc, got '" + raw + "'");
                   }
                 },
                 [](const RunConfig& c) { return std::string(trainer::objective_name(c.train.objective)); }});
    f.push_back(typed<std::size_t>("train", "K", PRISM_ACCESS(train.candidates)));
    f.push_back(typed<std::size_t>("train", "batch", PRISM_ACCESS(train.batch)));
    f.push_back(typed<std::size_t>("train", "epochs", PRISM_ACCESS(train.epochs)));
    f.push_back(typed<std::size_t>("train", "max_steps", PRISM_ACCESS(train.max_steps)));
    f.push_back(typed<double>("train", "lr", PRISM_ACCESS(train.lr)));
    f.push_back(typed<double>("train", "weight_decay", PRISM_ACCESS(train.weight_decay)));
    f.push_back(typed<double>("train", "beta1", PRISM_ACCESS(train.beta1)));
    f.push_back(typed<double>("train", "beta2", PRISM_ACCESS(train.beta2)));
    f.push_back(typed<double>("train", "adam_eps", PRISM_ACCESS(train.adam_eps)));
    f.push_back(typed<double>("train", "grad_clip", PRISM_ACCESS(train.grad_clip)));
    f.push_back(typed<double>("train", "warmup_frac", PRISM_ACCESS(train.warmup_frac)));
    f.push_back(typed<bool>("train", "redraw_features", PRISM_ACCESS(train.redraw_features)));
    f.push_back(typed<std::uint64_t>("train", "seed", PRISM_ACCESS(train.seed)));
    f.push_back({"train", "precision", false,
                 [](RunConfig& c, const std::string& raw) {
                   const std::string s = trim(raw);
                   if (s == "float64") c.train.precision = num::Precision::kFloat64;
                   else if (s == "float32") c.train.precision = num::Precision::kFloat32;
                   else throw ConfigError("train.precision: expected float64 or float32, got '" + raw + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.train.precision == num::Precision::kFloat32 ? "float32" : "float64");
                 }});
    // [loss]
    f.push_back(typed<double>("loss", "charbonnier_eps", PRISM_ACCESS(train.charbonnier_eps)));
    f.push_back(typed<double>("loss", "lambda_soft", PRISM_ACCESS(train.lambda_soft)));
    f.push_back(typed<std::size_t>("loss", "top_k", PRISM_ACCESS(train.top_k)));
    f.push_back(typed<double>("loss", "tau", PRISM_ACCESS(train.tau)));
    f.push_back(typed<double>("loss", "quantile", PRISM_ACCESS(train.quantile)));
    f.push_back(typed<double>("loss", "momentum", PRISM_ACCESS(train.momentum)));
    f.push_back(typed<double>("loss", "eps_min", PRISM_ACCESS(train.eps_min)));
    f.push_back(typed<double>("loss", "eps_max", PRISM_ACCESS(train.eps_max)));
    f.push_back(typed<double>("loss", "eps_init", PRISM_ACCESS(train.eps_init)));
    f.push_back(typed<bool>("loss", "freeze_threshold", PRISM_ACCESS(train.freeze_threshold)));
    // [data]
    f.push_back(typed<std::size_t>("data", "demos", PRISM_ACCESS(data.demos)));
    f.push_back(typed<std::size_t>("data", "validation_demos", PRISM_ACCESS(data.validation_demos)));
    f.push_back({"data", "seed", false,
                 [](RunConfig& c, const std::string& raw) {
                   if (trim(raw) == "auto") c.data.seed.reset();
                   else c.data.seed = parse_value<std::uint64_t>("data.seed", raw);
                 },
                 [](const RunConfig& c) { return c.data.seed ? std::to_string(*c.data.seed) : std::string("auto"); }});
    f.push_back(typed<double>("data", "x0_min", PRISM_ACCESS(data.x0_min)));
    f.push_back(typed<double>("data", "x0_max", PRISM_ACCESS(data.x0_max)));
    f.push_back(typed<std::size_t>("data", "pad_steps", PRISM_ACCESS(data.pad_steps)));
    f.push_back(typed<double>("data", "modality_dropout", PRISM_ACCESS(train.modality_dropout)));
    f.push_back(typed<bool>("data", "pad_start", PRISM_ACCESS(train.pad_start)));
    // [env]
    f.push_back(typed<double>("env", "obstacle_radius", PRISM_ACCESS(env.obstacle_radius)));
    f.push_back(typed<double>("env", "goal_x", PRISM_ACCESS(env.goal_x)));
    f.push_back(typed<double>("env", "goal_y", PRISM_ACCESS(env.goal_y)));
    f.push_back(typed<double>("env", "start_y", PRISM_ACCESS(env.start_y)));
    f.push_back(typed<double>("env", "step_size", PRISM_ACCESS(env.step_size)));
    f.push_back(typed<double>("env", "success_radius", PRISM_ACCESS(env.success_radius)));
    f.push_back(typed<std::size_t>("env", "budget", PRISM_ACCESS(env.budget)));
    f.push_back(typed<double>("env", "view_noise", PRISM_ACCESS(env.view_noise)));
    // [eval]
    f.push_back(typed<std::size_t>("eval", "seeds", PRISM_ACCESS(eval.seeds)));
    f.push_back(typed<std::size_t>("eval", "rollouts", PRISM_ACCESS(eval.rollouts)));
    f.push_back(typed<std::uint64_t>("eval", "seed", PRISM_ACCESS(eval.seed)));
    f.push_back(typed<std::size_t>("eval", "K", PRISM_ACCESS(eval.candidates)));
    f.push_back(typed<std::size_t>("eval", "chunk", PRISM_ACCESS(eval.chunk)));
    f.push_back(typed<double>("eval", "x0_min", PRISM_ACCESS(eval.x0_min)));
    f.push_back(typed<double>("eval", "x0_max", PRISM_ACCESS(eval.x0_max)));
    f.push_back({"eval", "selection", false,
                 [](RunConfig& c, const std::string& raw) { c.eval.selection = split_list(raw); },
                 [](const RunConfig& c) { return join_list(c.eval.selection); }});
    f.push_back({"eval", "dropout", false,
                 [](RunConfig& c, const std::string& raw) {
                   c.eval.dropout = trim(raw) == "grid" ? std::vector<std::string>{} : split_list(raw);
                 },
                 [](const RunConfig& c) { return c.eval.dropout.empty() ? std::string("grid") : join_list(c.eval.dropout); }});
    f.push_back({"eval", "proxy_mode", false,
                 [](RunConfig& c, const std::string& raw) {
                   const std::string s = trim(raw);
                   if (s != "action" && s != "state")
                     throw ConfigError("eval.proxy_mode: expected action or state, got '" + raw + "'");
                   c.eval.proxy_mode = s;
                 },
                 [](const RunConfig& c) { return c.eval.proxy_mode; }});
    return f;
  }();
  return table;
}

#undef PRISM_ACCESS

void check_values(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.data.demos == 0) fail("data.demos must be at least 1");
  if (!(c.data.x0_min < c.data.x0_max)) fail("data.x0_min must be below data.x0_max");
  if (c.env.budget == 0) fail("env.budget must be at least 1");
  if (!(c.env.step_size > 0.0)) fail("env.step_size must be positive");
  if (!(c.env.success_radius > 0.0)) fail("env.success_radius must be positive");
  if (c.env.obstacle_radius < 0.0) fail("env.obstacle_radius must be non-negative");
  if (c.env.view_noise < 0.0) fail("env.view_noise must be non-negative");
  if (c.eval.seeds == 0) fail("eval.seeds must be at least 1");
  if (c.eval.rollouts == 0) fail("eval.rollouts must be at least 1");
  if (c.eval.candidates == 0) fail("eval.K must be at least 1");
  if (c.eval.chunk == 0) fail("eval.chunk must be at least 1");
  if (!(c.eval.x0_min <= c.eval.x0_max)) fail("eval.x0_min must not exceed eval.x0_max");
  if (c.eval.selection.empty()) fail("eval.selection must name at least one rule");
  for (const auto& s : c.eval.selection) {
    if (s != "proxy" && s != "tiebreak" && s != "random")
      fail("eval.selection: expected proxy, tiebreak or random, got '" + s + "'");
  }
}

}  // namespace

std::uint64_t DataConfig::resolved_seed(std::uint64_t train_seed) const {
  return seed ? *seed : num::Rng::derive_seed(train_seed, "demos");
}

std::vector<model::ModalitySpec> push_modalities() {
  std::vector<model::ModalitySpec> out;
  for (std::size_t m = 0; m < bench::kModalityNames.size(); ++m)
    out.push_back({bench::kModalityNames[m], bench::kModalityWidths[m]});
  return out;
}

Tree read_config_text(const std::string& text) {
  std::istringstream in(text);
  Tree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw IoError("config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  return tree;
}

Tree read_config_file(const std::string& path) {
  Tree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw IoError(path + ": " + e.message() + (e.line() ? " at line " + std::to_string(e.line()) : ""));
  }
  return tree;
}

void apply_override(Tree& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string path = trim(assignment.substr(0, eq));
  const auto dot = path.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot == 0 || dot + 1 == path.size() ||
      path.find('.', dot + 1) != std::string::npos)
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  tree.put(path, trim(assignment.substr(eq + 1)));
}

RunConfig parse_run_config(const Tree& tree, bool need_model) {
  RunConfig cfg;
  // Training-sized defaults; the model shape defaults follow ModelConfig.
  cfg.train.model.modalities = push_modalities();
  std::set<std::string> known;
  for (const Field& f : fields()) known.insert(f.path());

  for (const auto& [section, body] : tree) {
    if (!body.data().empty() && body.empty())
      throw ConfigError(section + ": value outside of a section");
    for (const auto& [key, value] : body) {
      const std::string path = section + "." + key;
      if (!known.count(path)) throw ConfigError(path + ": unknown setting");
    }
  }
  for (const Field& f : fields()) {
    const auto value = tree.get_optional<std::string>(Tree::path_type(f.path(), '.'));
    if (value) {
      f.set(cfg, *value);
    } else if (f.required && need_model) {
      throw ConfigError(f.path() + ": required setting is missing");
    }
  }
  try {
    if (need_model) cfg.train.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (need_model && cfg.train.model.action_dim != 2) throw ConfigError("model.action_dim: the push task is planar");
  check_values(cfg);
  return cfg;
}

Tree to_tree(const RunConfig& cfg) {
  Tree tree;
  for (const Field& f : fields()) tree.put(Tree::path_type(f.path(), '.'), f.get(cfg));
  return tree;
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream out;
  boost::property_tree::write_ini(out, to_tree(cfg));
  return out.str();
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const Field& f : fields()) j[f.section][f.key] = f.get(cfg);
  return j;
}

}  // namespace prism::cli
