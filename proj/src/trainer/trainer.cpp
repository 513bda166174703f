#include "prism/trainer/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <ostream>

#include "prism/model/checkpoint.hpp"
#include "prism/numerics/errors.hpp"
#include "prism/numerics/ops.hpp"

namespace prism::trainer {

namespace {

constexpr std::size_t kMaxValidationWindows = 512;

bool decays(const std::string& name, const num::Tensor& t) {
  return t.rank() == 2 && name.find(".pos") == std::string::npos && name != "gen.queries";
}

WindowSet thin(WindowSet set, std::size_t cap) {
  if (set.windows.size() <= cap) return set;
  std::vector<WindowRef> kept;
  const double stride = static_cast<double>(set.windows.size()) / static_cast<double>(cap);
  for (std::size_t i = 0; i < cap; ++i) kept.push_back(set.windows[static_cast<std::size_t>(i * stride)]);
  set.windows = std::move(kept);
  return set;
}

}  // namespace

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::kBatchGlobal: return "batch_global";
    case Objective::kPerSample: return "per_sample";
    case Objective::kMseBc: return "mse_bc";
  }
  return "unknown";
}

Objective parse_objective(const std::string& name) {
  if (name == "batch_global") return Objective::kBatchGlobal;
  if (name == "per_sample") return Objective::kPerSample;
  if (name == "mse_bc") return Objective::kMseBc;
  throw DomainError("unknown objective '" + name + "' (expected batch_global, per_sample or mse_bc)");
}

void TrainConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& msg) { throw DomainError(msg); };
  if (candidates == 0) fail("train.K must be at least 1");
  if (batch == 0) fail("train.batch must be at least 1");
  if (epochs == 0) fail("train.epochs must be at least 1");
  if (!(lr > 0.0)) fail("train.lr must be positive");
  if (weight_decay < 0.0) fail("train.weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("train.beta1/beta2 must lie in [0, 1)");
  if (!(grad_clip > 0.0)) fail("train.grad_clip must be positive");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) fail("train.warmup_frac must lie in [0, 1)");
  if (!(charbonnier_eps > 0.0)) fail("loss.charbonnier_eps must be positive");
  if (lambda_soft < 0.0) fail("loss.lambda_soft must be non-negative");
  if (top_k == 0 || (objective != Objective::kMseBc && top_k > candidates)) fail("loss.top_k must lie in [1, K]");
  if (!(tau > 0.0)) fail("loss.tau must be positive");
  if (!(quantile > 0.0 && quantile < 1.0)) fail("loss.quantile must lie in (0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("loss.momentum must lie in [0, 1)");
  if (!(eps_min > 0.0 && eps_min <= eps_max)) fail("loss.eps_min/eps_max need 0 < eps_min <= eps_max");
  if (eps_init != 0.0 && !(eps_init >= eps_min && eps_init <= eps_max)) fail("loss.eps_init must lie in [eps_min, eps_max]");
  if (modality_dropout < 0.0 || modality_dropout >= 1.0) fail("data.modality_dropout must lie in [0, 1)");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"model", model::config_to_json(c.model)},
          {"objective", objective_name(c.objective)},
          {"K", c.candidates},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"grad_clip", c.grad_clip},
          {"warmup_frac", c.warmup_frac},
          {"charbonnier_eps", c.charbonnier_eps},
          {"lambda_soft", c.lambda_soft},
          {"top_k", c.top_k},
          {"tau", c.tau},
          {"quantile", c.quantile},
          {"momentum", c.momentum},
          {"eps_min", c.eps_min},
          {"eps_max", c.eps_max},
          {"eps_init", c.eps_init},
          {"freeze_threshold", c.freeze_threshold},
          {"modality_dropout", c.modality_dropout},
          {"pad_start", c.pad_start},
          {"redraw_features", c.redraw_features},
          {"seed", c.seed},
          {"precision", c.precision == num::Precision::kFloat32 ? "float32" : "float64"}};
}

double global_norm(const std::vector<num::Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

double clip_global_norm(std::vector<num::Tensor>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g.data()) v *= factor;
  }
  return norm;
}

Trainer::Trainer(TrainConfig cfg, std::vector<EpisodeData> train, std::vector<EpisodeData> validation)
    : cfg_(std::move(cfg)),
      train_(std::move(train)),
      validation_(std::move(validation)),
      policy_((cfg_.validate(), cfg_.model), cfg_.seed),
      latent_rng_(num::Rng::substream(cfg_.seed, "latents")),
      dropout_rng_(num::Rng::substream(cfg_.seed, "dropout")) {
  if (train_.empty()) throw DomainError("training set is empty");
  loss_.distance = loss::DistanceConfig::from_actions(stack_actions(train_), cfg_.charbonnier_eps);
  if (cfg_.pad_start) {
    for (auto& ep : train_) ep = pad_start(ep, cfg_.model.obs_horizon - 1);
    for (auto& ep : validation_) ep = pad_start(ep, cfg_.model.obs_horizon - 1);
  }
  train_windows_ = make_windows(train_, cfg_.model.obs_horizon, cfg_.model.pred_horizon);
  if (train_windows_.windows.empty()) throw DomainError("no training episode is long enough for T_o + T_p");
  validation_windows_ =
      thin(validation_.empty() ? train_windows_ : make_windows(validation_, cfg_.model.obs_horizon, cfg_.model.pred_horizon),
           kMaxValidationWindows);

  loss_.top_k = cfg_.top_k;
  loss_.tau = cfg_.tau;
  loss_.lambda_soft = cfg_.lambda_soft;
  loss_.scope = cfg_.objective == Objective::kPerSample ? loss::MaskScope::kPerSample : loss::MaskScope::kBatchGlobal;
  loss_.freeze_threshold = cfg_.freeze_threshold;
  rs_.quantile = cfg_.quantile;
  rs_.momentum = cfg_.momentum;
  rs_.eps_min = cfg_.eps_min;
  rs_.eps_max = cfg_.eps_max;
  rs_.eps_rs = cfg_.eps_init == 0.0 ? cfg_.eps_min : cfg_.eps_init;

  for (const auto& e : policy_.params().entries()) {
    opt_.m.emplace_back(e.value.shape());
    opt_.v.emplace_back(e.value.shape());
  }
}

std::size_t Trainer::steps_per_epoch() const {
  return std::max<std::size_t>(1, train_windows_.windows.size() / cfg_.batch);
}

std::size_t Trainer::planned_steps() const {
  const std::size_t full = cfg_.epochs * steps_per_epoch();
  return cfg_.max_steps == 0 ? full : std::min(full, cfg_.max_steps);
}

double Trainer::learning_rate(std::size_t step) const {
  const std::size_t total = planned_steps();
  const std::size_t warm =
      cfg_.warmup_frac > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg_.warmup_frac * total))) : 0;
  if (step < warm) return cfg_.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  const double span = static_cast<double>(std::max<std::size_t>(1, total - warm));
  const double progress = std::min(1.0, static_cast<double>(step - warm) / span);
  return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

num::Tensor Trainer::draw_latents(num::Rng& rng, std::size_t items) const {
  const std::size_t k = cfg_.effective_candidates();
  num::Tensor z(num::Shape{items * k, cfg_.model.resolved_latent_dim()});
  if (cfg_.objective != Objective::kMseBc) rng.fill_normal(z.data());
  return z;
}

num::Var Trainer::objective(num::Tape& tape, const num::BoundParams& p, const Batch& batch,
                            const num::Tensor& latents, const loss::RsState& state, loss::StepLoss* details) const {
  const std::size_t b = batch.obs.batch, k = cfg_.effective_candidates();
  const num::Var context = policy_.encode(tape, p, batch.obs);
  const num::Var cand = policy_.generate(tape, p, context, b, k, latents);
  if (cfg_.objective == Objective::kMseBc) {
    const num::Var mse = num::mean(num::square(num::sub(cand, tape.constant(batch.targets))));
    details->hard = mse.value().item();
    details->state = state;
    details->total = mse;
    return mse;
  }
  *details = loss::imle_objective(cand, batch.targets, b, k, loss_, state);
  return details->total;
}

StepStats Trainer::train_step(std::span<const WindowRef> windows) {
  if (windows.empty()) throw DomainError("train_step needs at least one window");
  const Batch batch = assemble(train_, windows, cfg_.model, cfg_.modality_dropout, &dropout_rng_);
  const num::Tensor latents = draw_latents(latent_rng_, windows.size());
  const std::size_t calls_before = policy_.generator_calls();

  num::Tape tape(cfg_.precision);
  num::BoundParams p(tape, policy_.params());
  loss::StepLoss details;
  const num::Var loss = objective(tape, p, batch, latents, rs_, &details);
  std::vector<num::Tensor> grads = p.collect(tape.backward(loss));

  StepStats stats;
  stats.grad_norm = clip_global_norm(grads, cfg_.grad_clip);
  stats.clipped_norm = global_norm(grads);
  if (!std::isfinite(stats.grad_norm)) throw NumericError("non-finite gradient norm at step " + std::to_string(opt_.step));
  stats.lr = learning_rate(opt_.step);

  const double t = static_cast<double>(opt_.step + 1);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t), c2 = 1.0 - std::pow(cfg_.beta2, t);
  auto& entries = policy_.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto pv = entries[i].value.data();
    auto m = opt_.m[i].data();
    auto v = opt_.v[i].data();
    const auto g = grads[i].data();
    const double wd = decays(entries[i].name, entries[i].value) ? cfg_.weight_decay : 0.0;
    for (std::size_t j = 0; j < pv.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.adam_eps);
      pv[j] -= stats.lr * (update + wd * pv[j]);
    }
  }
  rs_ = details.state;

  stats.log.step = opt_.step;
  stats.log.hard = details.hard;
  stats.log.soft = details.soft;
  stats.log.total = details.total.value().item();
  stats.log.eps_rs = rs_.eps_rs;
  stats.log.rejection_rate = details.rejection_rate;
  stats.log.eps_tilde = rs_.last_estimate;
  stats.generator_calls = policy_.generator_calls() - calls_before;
  ++opt_.step;
  return stats;
}

double Trainer::validation_loss() const {
  const auto& set = validation_.empty() ? train_ : validation_;
  const auto& windows = validation_windows_.windows;
  num::Rng rng = num::Rng::substream(cfg_.seed, "validation");
  loss::LossConfig frozen = loss_;
  frozen.freeze_threshold = true;
  double total = 0.0;
  for (std::size_t start = 0; start < windows.size(); start += cfg_.batch) {
    const std::size_t n = std::min(cfg_.batch, windows.size() - start);
    const std::span<const WindowRef> chunk(windows.data() + start, n);
    const Batch batch = assemble(set, chunk, cfg_.model);
    const num::Tensor z = draw_latents(rng, n);
    num::Tape tape(cfg_.precision);
    num::BoundParams p(tape, policy_.params(), false);
    const num::Var context = policy_.encode(tape, p, batch.obs);
    const std::size_t k = cfg_.effective_candidates();
    const num::Var cand = policy_.generate(tape, p, context, n, k, z);
    double value;
    if (cfg_.objective == Objective::kMseBc) {
      value = num::mean(num::square(num::sub(cand, tape.constant(batch.targets)))).value().item();
    } else {
      value = loss::imle_objective(cand, batch.targets, n, k, frozen, rs_).total.value().item();
    }
    total += value * static_cast<double>(n);
  }
  return total / static_cast<double>(windows.size());
}

FitResult Trainer::fit(const FitOptions& opts) {
  FitResult result;
  const std::size_t spe = steps_per_epoch(), planned = planned_steps();
  const auto& all = train_windows_.windows;
  if (opts.log) loss::write_log_header(*opts.log);
  while (epoch_ < cfg_.epochs && opt_.step < planned) {
    if (cfg_.redraw_features && epoch_ > 0)
      policy_.redraw_features(num::Rng::derive_seed(cfg_.seed, "features/epoch" + std::to_string(epoch_)));
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    num::Rng shuffle = num::Rng::substream(cfg_.seed, "shuffle/epoch" + std::to_string(epoch_));
    shuffle.shuffle(order);
    const std::size_t per = std::min(cfg_.batch, all.size());
    for (std::size_t s = 0; s < spe && opt_.step < planned; ++s) {
      std::vector<WindowRef> batch;
      for (std::size_t i = 0; i < per; ++i) batch.push_back(all[order[s * per + i]]);
      const StepStats stats = train_step(batch);
      result.records.push_back(stats.log);
      if (opts.log) loss::write_log_row(*opts.log, stats.log);
      if (opts.on_step) opts.on_step(stats);
    }
    ++epoch_;
    const double val = validation_loss();
    result.validation.push_back(val);
    const bool improved = !has_best_ || val < best_validation_;
    if (improved) {
      best_validation_ = val;
      has_best_ = true;
    }
    if (!opts.checkpoint_dir.empty()) {
      const std::string last = (std::filesystem::path(opts.checkpoint_dir) / "last.ckpt").string();
      save(last);
      if (std::find(result.checkpoints.begin(), result.checkpoints.end(), last) == result.checkpoints.end())
        result.checkpoints.push_back(last);
      if (improved) {
        const std::string best = (std::filesystem::path(opts.checkpoint_dir) / "best.ckpt").string();
        save(best);
        if (std::find(result.checkpoints.begin(), result.checkpoints.end(), best) == result.checkpoints.end())
          result.checkpoints.push_back(best);
      }
    }
  }
  result.best_validation = best_validation_;
  result.steps = opt_.step;
  return result;
}

void Trainer::save(const std::string& path) const {
  model::Checkpoint ckpt = model::policy_checkpoint(policy_, cfg_.seed);
  ckpt.meta["train"] = train_config_to_json(cfg_);
  ckpt.meta["step"] = opt_.step;
  ckpt.meta["epoch"] = epoch_;
  ckpt.meta["rs"] = {{"eps_rs", rs_.eps_rs}, {"last_estimate", rs_.last_estimate}};
  ckpt.meta["rng"] = {{"latents", latent_rng_.state()}, {"dropout", dropout_rng_.state()}};
  ckpt.meta["best_validation"] = best_validation_;
  ckpt.meta["has_best"] = has_best_;
  ckpt.meta["distance_weights"] = loss_.distance.weights;
  const auto& entries = policy_.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m/" + entries[i].name, opt_.m[i]);
    ckpt.tensors.emplace_back("adam.v/" + entries[i].name, opt_.v[i]);
  }
  save_checkpoint(path, ckpt);
}

void Trainer::load(const std::string& path) {
  const model::Checkpoint ckpt = model::load_checkpoint(path);
  if (!ckpt.meta.contains("model") || ckpt.meta.at("model") != model::config_to_json(cfg_.model))
    throw IoError(path + ": model config echo does not match the training config");
  if (!ckpt.meta.contains("step")) throw IoError(path + " holds no trainer state");
  policy_ = model::restore_policy(ckpt);
  auto& entries = policy_.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    opt_.m[i] = ckpt.tensor("adam.m/" + entries[i].name);
    opt_.v[i] = ckpt.tensor("adam.v/" + entries[i].name);
  }
  opt_.step = ckpt.meta.at("step");
  epoch_ = ckpt.meta.at("epoch");
  rs_.eps_rs = ckpt.meta.at("rs").at("eps_rs");
  rs_.last_estimate = ckpt.meta.at("rs").at("last_estimate");
  latent_rng_.restore(ckpt.meta.at("rng").at("latents"));
  dropout_rng_.restore(ckpt.meta.at("rng").at("dropout"));
  best_validation_ = ckpt.meta.at("best_validation");
  has_best_ = ckpt.meta.at("has_best");
  loss_.distance.weights = ckpt.meta.at("distance_weights").get<std::vector<double>>();
}

}  // namespace prism::trainer
