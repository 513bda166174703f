#include "prism/model/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "prism/numerics/errors.hpp"

namespace prism::model {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'I', 'S', 'M', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw IoError(path + ": truncated checkpoint header");
  return value;
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const num::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw IoError("checkpoint has no tensor '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const std::string text = header.dump();

  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, Checkpoint::kVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors)
      out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    out.flush();
    if (!out) throw IoError("write to " + tmp + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(path + " is not a checkpoint (bad magic)");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != Checkpoint::kVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto length = read_pod<std::uint64_t>(in, path);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw IoError(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed header: " + e.what());
  }
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    num::Tensor t(entry.at("shape").get<num::Shape>());
    if (!in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw IoError(path + ": payload ends inside tensor '" + entry.at("name").get<std::string>() + "'");
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : cfg.modalities) mods.push_back({{"name", m.name}, {"width", m.width}});
  return {{"modalities", mods},
          {"T_o", cfg.obs_horizon},
          {"T_p", cfg.pred_horizon},
          {"action_dim", cfg.action_dim},
          {"width", cfg.width},
          {"latent_dim", cfg.latent_dim},
          {"layers", cfg.layers},
          {"ff_hidden", cfg.ff_hidden},
          {"modality_hidden", cfg.modality_hidden},
          {"modality_embed", cfg.modality_embed},
          {"fusion_hidden", cfg.fusion_hidden},
          {"heads", cfg.attention.heads},
          {"features", cfg.attention.features},
          {"denom_floor", cfg.attention.denom_floor},
          {"scale_logits", cfg.attention.scale_logits},
          {"key_stabilization",
           cfg.attention.key_stabilization == linattn::KeyStabilization::kUnbiased ? "unbiased" : "rowmax"}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    for (const auto& m : j.at("modalities")) cfg.modalities.push_back({m.at("name"), m.at("width")});
    cfg.obs_horizon = j.at("T_o");
    cfg.pred_horizon = j.at("T_p");
    cfg.action_dim = j.at("action_dim");
    cfg.width = j.at("width");
    cfg.latent_dim = j.at("latent_dim");
    cfg.layers = j.at("layers");
    cfg.ff_hidden = j.at("ff_hidden");
    cfg.modality_hidden = j.at("modality_hidden");
    cfg.modality_embed = j.at("modality_embed");
    cfg.fusion_hidden = j.at("fusion_hidden");
    cfg.attention.heads = j.at("heads");
    cfg.attention.features = j.at("features");
    cfg.attention.denom_floor = j.at("denom_floor");
    cfg.attention.scale_logits = j.at("scale_logits");
    cfg.attention.key_stabilization = j.at("key_stabilization") == "rowmax" ? linattn::KeyStabilization::kRowMax
                                                                          : linattn::KeyStabilization::kUnbiased;
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model config echo: ") + e.what());
  }
}

Checkpoint policy_checkpoint(const Policy& policy, std::uint64_t init_seed) {
  Checkpoint ckpt;
  ckpt.meta["model"] = config_to_json(policy.config());
  ckpt.meta["init_seed"] = init_seed;
  ckpt.meta["feature_seed"] = policy.feature_seed();
  for (const auto& e : policy.params().entries()) ckpt.tensors.emplace_back("param/" + e.name, e.value);
  return ckpt;
}

Policy restore_policy(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model")) throw IoError("checkpoint carries no model config");
  Policy policy(config_from_json(ckpt.meta.at("model")), ckpt.meta.value("init_seed", std::uint64_t{0}));
  if (ckpt.meta.contains("feature_seed")) policy.redraw_features(ckpt.meta.at("feature_seed").get<std::uint64_t>());
  for (auto& e : policy.params().entries()) {
    const num::Tensor& stored = ckpt.tensor("param/" + e.name);
    if (stored.shape() != e.value.shape()) {
      throw IoError("parameter '" + e.name + "' has shape " + num::shape_string(stored.shape()) +
                    " in the checkpoint but the config implies " + num::shape_string(e.value.shape()));
    }
    e.value = stored;
  }
  return policy;
}

}  // namespace prism::model
