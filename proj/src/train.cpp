/* Copyright 2026 The CILF Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");

You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cilf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "cilf/error.hpp"
#include "text_util.hpp"

namespace cilf::train {
namespace {

using model::GradientRouting;
using model::Matrix;
using model::ModelParams;
using model::ParamGroup;
using model::Vector;

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kNoiseStream = 0x4e4f;

struct FlatBatch {
  std::vector<const data::SceneWindow*> windows;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> domain_begin;  // size = n_domains + 1
};

FlatBatch flatten(std::span<const DomainBatch> batches) {
  FlatBatch flat;
  flat.domain_begin.push_back(0);
  for (std::size_t d = 0; d < batches.size(); ++d) {
    if (batches[d].windows.empty()) {
      throw ArgumentError("train step: empty batch for domain " + batches[d].domain.str());
    }
    for (const data::SceneWindow* w : batches[d].windows) {
      flat.windows.push_back(w);
      flat.labels.push_back(d);
    }
    flat.domain_begin.push_back(flat.windows.size());
  }
  return flat;
}

std::vector<double> future_targets(const FlatBatch& flat) {
  std::vector<double> gt;
  gt.reserve(flat.windows.size() * data::kPredLen * 2);
  for (const data::SceneWindow* w : flat.windows) {
    if (w->ego_future.size() != data::kPredLen) {
      throw ArgumentError("window future has " + std::to_string(w->ego_future.size()) +
                          " points, expected " + std::to_string(data::kPredLen));
    }
    for (const auto& p : w->ego_future) {
      gt.push_back(p.x);
      gt.push_back(p.y);
    }
  }
  return gt;
}

constexpr std::size_t kTrajValues = data::kPredLen * 2;

// Copies a 2 x T prediction (column-major, so x/y interleaved) into `out`.
void append_pred(const Matrix& pred, std::vector<double>& out) {
  out.insert(out.end(), pred.data(), pred.data() + pred.size());
}

Matrix as_pred_grad(std::span<const double> g) {
  return Eigen::Map<const Matrix>(g.data(), 2, static_cast<Eigen::Index>(data::kPredLen));
}

bool is_decoder_tensor(const model::TensorInfo& t) { return t.name.rfind("dec.", 0) == 0; }

// d/dparams of the per-domain IC-branch risk R_s = mean((pred_ic - gt)^2).
std::vector<double> domain_risk_gradient(const model::Network& net, const ModelParams& params,
                                         const FlatBatch& flat, const std::vector<double>& gt,
                                         std::size_t domain, kernels::Exec exec) {
  const std::size_t begin = flat.domain_begin[domain];
  const std::size_t end = flat.domain_begin[domain + 1];
  std::span<const data::SceneWindow* const> windows(flat.windows.data() + begin, end - begin);
  std::vector<double> noise(windows.size() * net.config().v_dim, 0.0);
  std::vector<model::ForwardCache> caches;
  kernels::forward_batch(exec, net, params, windows, noise, model::MaskMode::soft,
                         net.config().gumbel_temperature, caches);
  const double count = static_cast<double>(windows.size() * kTrajValues);
  std::vector<model::OutputGrads> up(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Matrix& pred = caches[i].pred_ic_only();
    const Eigen::Map<const Matrix> target(gt.data() + (begin + i) * kTrajValues, 2,
                                          static_cast<Eigen::Index>(data::kPredLen));
    up[i].ic_only = 2.0 * (pred - target) / count;
  }
  std::vector<double> grad(params.size());
  kernels::backward_batch(exec, net, params, caches, up, GradientRouting::total, grad);
  return grad;
}

// Full-decoder IRM penalty mean_s ||grad_dec R_s||^2. Its parameter gradient
// is 2 H_s g_s averaged over domains, with the Hessian-vector product taken by
// central differences of the risk gradient along g_s.
double full_decoder_irm(const model::Network& net, const ModelParams& params,
                        const FlatBatch& flat, const std::vector<double>& gt, double weight,
                        kernels::Exec exec, std::vector<double>* grad) {
  const std::size_t n_domains = flat.domain_begin.size() - 1;
  std::vector<bool> on_decoder(params.size(), false);
  for (const auto& t : params.tensors()) {
    if (is_decoder_tensor(t)) {
      std::fill_n(on_decoder.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), true);
    }
  }
  double penalty = 0.0;
  for (std::size_t s = 0; s < n_domains; ++s) {
    const std::vector<double> g = domain_risk_gradient(net, params, flat, gt, s, exec);
    std::vector<double> direction(params.size(), 0.0);
    double norm2 = 0.0;
    for (std::size_t e = 0; e < g.size(); ++e) {
      if (!on_decoder[e]) continue;
      direction[e] = g[e];
      norm2 += g[e] * g[e];
    }
    penalty += norm2;
    if (grad == nullptr || weight == 0.0 || norm2 == 0.0) continue;
    const double eps = 1e-5 / std::sqrt(norm2);
    ModelParams plus = params;
    ModelParams minus = params;
    for (std::size_t e = 0; e < g.size(); ++e) {
      plus.values()[e] += eps * direction[e];
      minus.values()[e] -= eps * direction[e];
    }
    const auto g_plus = domain_risk_gradient(net, plus, flat, gt, s, exec);
    const auto g_minus = domain_risk_gradient(net, minus, flat, gt, s, exec);
    const double scale = weight * 2.0 / static_cast<double>(n_domains) / (2.0 * eps);
    for (std::size_t e = 0; e < g.size(); ++e) {
      (*grad)[e] += scale * (g_plus[e] - g_minus[e]);
    }
  }
  return penalty / static_cast<double>(n_domains);
}

void check_finite_losses(const LossBundle& b, std::uint64_t step) {
  const std::pair<const char*, double> terms[] = {{"l_causal", b.l_causal},
                                                  {"l_spurious", b.l_spurious},
                                                  {"l_irm", b.l_irm},
                                                  {"l_contrast", b.l_contrast}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw NumericError(std::string("non-finite ") + name + " at step " + std::to_string(step));
    }
  }
}

std::string fmt(double v) { return text::format_double(v); }

}  // namespace

double TemperatureSchedule::at(std::uint64_t step, std::uint64_t total_steps) const {
  const std::uint64_t decay = decay_steps > 0 ? decay_steps : total_steps / 2;
  if (decay == 0 || step >= decay) return final_value;
  const double frac = static_cast<double>(step) / static_cast<double>(decay);
  return initial * std::pow(final_value / initial, frac);
}

void TrainConfig::validate() const {
  model.validate();
  hyper.validate();
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 per domain");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(schedule.initial > 0.0) || !(schedule.final_value > 0.0)) {
    throw ConfigError("train: gumbel temperatures must be > 0");
  }
}

std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : model::to_key_values(c.model)) kv["model." + k] = v;
  const auto& h = c.hyper;
  kv["train.lambda"] = fmt(h.lambda);
  kv["train.alpha"] = fmt(h.alpha);
  kv["train.tau_contrast"] = fmt(h.tau_contrast);
  kv["train.mask_update_period"] = std::to_string(h.mask_update_period);
  kv["train.lr_backbone"] = fmt(h.lr_backbone);
  kv["train.lr_v"] = fmt(h.lr_v);
  kv["train.lr_mask"] = fmt(h.lr_mask);
  kv["train.irm_mode"] = h.irm_mode == losses::IrmMode::dummy_scalar ? "dummy_scalar" : "full_decoder";
  kv["train.literal_v_objective"] = h.literal_v_objective ? "true" : "false";
  kv["train.update_backbone"] = h.update_backbone ? "true" : "false";
  kv["train.update_v"] = h.update_v ? "true" : "false";
  kv["train.update_mask"] = h.update_mask ? "true" : "false";
  kv["train.batch_size"] = std::to_string(c.batch_size);
  kv["train.epochs"] = std::to_string(c.epochs);
  kv["train.seed"] = std::to_string(c.seed);
  kv["train.checkpoint_period"] = std::to_string(c.checkpoint_period);
  kv["train.tau_initial"] = fmt(c.schedule.initial);
  kv["train.tau_final"] = fmt(c.schedule.final_value);
  kv["train.tau_decay_steps"] = std::to_string(c.schedule.decay_steps);
  kv["train.rotate"] = c.rotate ? "true" : "false";
  return kv;
}

OptimizerState make_optimizer_state(const ModelParams& params) {
  OptimizerState s;
  s.first_moment.assign(params.size(), 0.0);
  s.second_moment.assign(params.size(), 0.0);
  return s;
}

StepEvaluation evaluate_step(const model::Network& net, std::span<const DomainBatch> batches,
                             const ModelParams& params, const TrainConfig& config,
                             std::span<const double> noise, double temperature,
                             bool with_gradient) {
  const FlatBatch flat = flatten(batches);
  const std::size_t n = flat.windows.size();
  const std::vector<double> gt = future_targets(flat);
  const auto& hyper = config.hyper;

  std::vector<model::ForwardCache> caches;
  kernels::forward_batch(config.exec, net, params, flat.windows, noise, model::MaskMode::soft,
                         temperature, caches);

  std::vector<double> causal, spurious, ic_only;
  causal.reserve(n * kTrajValues);
  spurious.reserve(n * kTrajValues);
  ic_only.reserve(n * kTrajValues);
  std::vector<Vector> projections(n);
  for (std::size_t i = 0; i < n; ++i) {
    append_pred(caches[i].pred_causal(), causal);
    append_pred(caches[i].pred_spurious(), spurious);
    append_pred(caches[i].pred_ic_only(), ic_only);
    projections[i] = caches[i].projection;
  }

  std::vector<double> g_causal(with_gradient ? causal.size() : 0);
  std::vector<double> g_spurious(with_gradient ? spurious.size() : 0);
  const double l_causal = losses::rmse_loss(causal, gt, g_causal);
  const double l_spurious = losses::rmse_loss(spurious, gt, g_spurious);

  double l_irm = 0.0;
  std::vector<std::vector<double>> g_irm;
  std::vector<double> irm_param_grad;
  if (hyper.irm_mode == losses::IrmMode::dummy_scalar) {
    std::vector<losses::DomainPredictions> per_domain;
    for (std::size_t d = 0; d + 1 < flat.domain_begin.size(); ++d) {
      const std::size_t b = flat.domain_begin[d] * kTrajValues;
      const std::size_t e = flat.domain_begin[d + 1] * kTrajValues;
      per_domain.push_back({std::span<const double>(ic_only).subspan(b, e - b),
                            std::span<const double>(gt).subspan(b, e - b)});
    }
    l_irm = losses::irm_penalty(per_domain, with_gradient ? &g_irm : nullptr);
  } else {
    if (with_gradient) irm_param_grad.assign(params.size(), 0.0);
    l_irm = full_decoder_irm(net, params, flat, gt, hyper.lambda, config.exec,
                             with_gradient ? &irm_param_grad : nullptr);
  }

  std::vector<Vector> g_proj;
  const double l_contrast = losses::contrastive_loss(projections, flat.labels,
                                                     hyper.tau_contrast,
                                                     with_gradient ? &g_proj : nullptr);

  StepEvaluation out;
  out.losses = losses::compose_objectives(l_causal, l_spurious, l_irm, l_contrast, hyper);
  if (!with_gradient) return out;

  std::vector<model::OutputGrads> up(n);
  const bool contrast_in_v = !hyper.literal_v_objective && hyper.alpha != 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * kTrajValues;
    up[i].causal = as_pred_grad(std::span<const double>(g_causal).subspan(off, kTrajValues));
    up[i].spurious =
        as_pred_grad(std::span<const double>(g_spurious).subspan(off, kTrajValues));
    if (hyper.irm_mode == losses::IrmMode::dummy_scalar && hyper.lambda != 0.0) {
      const std::size_t d = flat.labels[i];
      const std::size_t local = (i - flat.domain_begin[d]) * kTrajValues;
      up[i].ic_only = hyper.lambda *
                      as_pred_grad(std::span<const double>(g_irm[d]).subspan(local, kTrajValues));
    }
    if (contrast_in_v) up[i].projection = hyper.alpha * g_proj[i];
  }
  out.gradient.assign(params.size(), 0.0);
  kernels::backward_batch(config.exec, net, params, caches, up, GradientRouting::adversarial,
                          out.gradient);
  if (!irm_param_grad.empty()) {
    for (std::size_t e = 0; e < out.gradient.size(); ++e) out.gradient[e] += irm_param_grad[e];
  }
  return out;
}

LossBundle train_step(const model::Network& net, std::span<const DomainBatch> batches,
                      ModelParams& params, OptimizerState& opt, const TrainConfig& config,
                      std::uint64_t step, double temperature, Rng& rng,
                      std::vector<double>* applied) {
  if (opt.first_moment.size() != params.size() || opt.second_moment.size() != params.size()) {
    throw ArgumentError("train_step: optimizer state does not match parameters");
  }
  std::size_t n = 0;
  for (const auto& b : batches) n += b.windows.size();
  std::vector<double> noise(n * net.config().v_dim);
  for (double& g : noise) g = rng.gumbel();

  StepEvaluation eval = evaluate_step(net, batches, params, config, noise, temperature);
  check_finite_losses(eval.losses, step);

  const auto& h = config.hyper;
  const bool mask_scheduled = !net.config().uniform_mask && h.update_mask &&
                              step % h.mask_update_period == 0;
  const std::array<bool, model::kParamGroupCount> enabled = {h.update_backbone, h.update_v,
                                                             mask_scheduled};
  const std::array<double, model::kParamGroupCount> lr = {h.lr_backbone, h.lr_v, h.lr_mask};
  std::array<double, model::kParamGroupCount> c1{}, c2{};
  for (std::size_t g = 0; g < model::kParamGroupCount; ++g) {
    if (!enabled[g]) continue;
    const auto t = static_cast<double>(++opt.steps[g]);
    c1[g] = 1.0 - std::pow(kBeta1, t);
    c2[g] = 1.0 - std::pow(kBeta2, t);
  }
  auto& values = params.values();
  for (const model::TensorInfo& info : params.tensors()) {
    const auto g = static_cast<std::size_t>(info.group);
    if (!enabled[g]) continue;
    for (std::size_t e = info.offset; e < info.offset + info.size(); ++e) {
      const double grad = eval.gradient[e];
      opt.first_moment[e] = kBeta1 * opt.first_moment[e] + (1.0 - kBeta1) * grad;
      opt.second_moment[e] = kBeta2 * opt.second_moment[e] + (1.0 - kBeta2) * grad * grad;
      const double m_hat = opt.first_moment[e] / c1[g];
      const double v_hat = opt.second_moment[e] / c2[g];
      values[e] -= lr[g] * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }
  if (applied != nullptr) *applied = std::move(eval.gradient);
  return eval.losses;
}

void write_log_header(std::ostream& out) {
  out << "step,l_causal,l_spurious,l_irm,l_contrast,objective_backbone,objective_v,"
         "objective_mask,gumbel_tau\n";
}

void write_log_row(std::ostream& out, const LogRow& r) {
  const auto& b = r.losses;
  out << r.step << ',' << fmt(b.l_causal) << ',' << fmt(b.l_spurious) << ',' << fmt(b.l_irm)
      << ',' << fmt(b.l_contrast) << ',' << fmt(b.objective_backbone) << ','
      << fmt(b.objective_v) << ',' << fmt(b.objective_mask) << ',' << fmt(r.gumbel_tau)
      << '\n';
}

// --- Trainer -----------------------------------------------------------------

Trainer::Trainer(TrainConfig config, std::vector<data::DomainId> domains,
                 std::vector<std::vector<data::SceneWindow>> windows)
    : config_(std::move(config)),
      net_(config_.model),
      domains_(std::move(domains)),
      windows_(std::move(windows)) {
  config_.validate();
  if (domains_.empty() || domains_.size() != windows_.size()) {
    throw ArgumentError("trainer: need one window list per source domain");
  }
  std::size_t largest = 0;
  for (std::size_t d = 0; d < windows_.size(); ++d) {
    if (windows_[d].empty()) {
      throw ConfigError("source domain " + domains_[d].str() + " has no windows");
    }
    for (const auto& w : windows_[d]) net_.check_window(w);
    largest = std::max(largest, windows_[d].size());
  }
  steps_per_epoch_ = (largest + config_.batch_size - 1) / config_.batch_size;
  params_ = net_.make_params();
  net_.init_params(params_, config_.seed);
  opt_ = make_optimizer_state(params_);
}

double Trainer::temperature_at(std::uint64_t step) const {
  return config_.schedule.at(step, total_steps());
}

std::vector<std::vector<std::size_t>> Trainer::batch_indices(std::uint64_t step) const {
  const std::uint64_t epoch = step / steps_per_epoch_;
  const std::uint64_t within = step % steps_per_epoch_;
  const std::size_t need = steps_per_epoch_ * config_.batch_size;
  std::vector<std::vector<std::size_t>> out(windows_.size());
  for (std::size_t d = 0; d < windows_.size(); ++d) {
    // Permutation of the domain, topped up with draws with replacement when
    // the domain is smaller than an epoch's worth of samples.
    Rng rng(config_.seed, {kShuffleStream, epoch, d});
    const std::size_t n = windows_[d].size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    while (order.size() < need) order.push_back(rng.index(n));
    const auto begin = order.begin() + static_cast<std::ptrdiff_t>(within * config_.batch_size);
    out[d].assign(begin, begin + static_cast<std::ptrdiff_t>(config_.batch_size));
  }
  return out;
}

LogRow Trainer::run_step() {
  const auto indices = batch_indices(step_);
  std::vector<DomainBatch> batches(windows_.size());
  for (std::size_t d = 0; d < windows_.size(); ++d) {
    batches[d].domain = domains_[d];
    for (std::size_t i : indices[d]) batches[d].windows.push_back(&windows_[d][i]);
  }
  LogRow row;
  row.step = step_;
  row.gumbel_tau = temperature_at(step_);
  Rng rng(config_.seed, {kNoiseStream, step_});
  row.losses = train_step(net_, batches, params_, opt_, config_, step_, row.gumbel_tau, rng);
  ++step_;
  return row;
}

void Trainer::run(std::uint64_t until_step, const std::function<void(const LogRow&)>& on_step) {
  while (step_ < until_step) {
    const LogRow row = run_step();
    if (on_step) on_step(row);
  }
}

void Trainer::restore(ModelParams params, OptimizerState opt, std::uint64_t step) {
  if (params.tensors() != params_.tensors()) {
    throw ArgumentError("trainer: restored parameters have a different layout");
  }
  if (opt.first_moment.size() != params.size() || opt.second_moment.size() != params.size()) {
    throw ArgumentError("trainer: restored optimizer state has the wrong size");
  }
  params_ = std::move(params);
  opt_ = std::move(opt);
  step_ = step;
}

checkpoint::Container Trainer::to_checkpoint(
    const std::map<std::string, std::string>& extra) const {
  checkpoint::Container c;
  c.metadata = extra;
  for (const auto& [k, v] : to_key_values(config_)) c.metadata[k] = v;
  c.metadata["train.step"] = std::to_string(step_);
  for (std::size_t g = 0; g < model::kParamGroupCount; ++g) {
    c.metadata["optimizer.steps." + model::to_string(static_cast<ParamGroup>(g))] =
        std::to_string(opt_.steps[g]);
  }
  checkpoint::put_model(c, config_.model, params_);
  c.tensors.push_back({"optimizer.first_moment", {opt_.first_moment.size()}, opt_.first_moment});
  c.tensors.push_back({"optimizer.second_moment", {opt_.second_moment.size()}, opt_.second_moment});
  return c;
}

void Trainer::restore(const checkpoint::Container& c) {
  auto [config, params] = checkpoint::get_model(c);
  const auto* m1 = c.find("optimizer.first_moment");
  const auto* m2 = c.find("optimizer.second_moment");
  if (m1 == nullptr || m2 == nullptr) throw ParseError("checkpoint: no optimizer state");
  OptimizerState opt;
  opt.first_moment = m1->values;
  opt.second_moment = m2->values;
  for (std::size_t g = 0; g < model::kParamGroupCount; ++g) {
    const auto key = "optimizer.steps." + model::to_string(static_cast<ParamGroup>(g));
    auto it = c.metadata.find(key);
    if (it == c.metadata.end()) throw ParseError("checkpoint: missing " + key);
    opt.steps[g] = std::stoull(it->second);
  }
  auto it = c.metadata.find("train.step");
  if (it == c.metadata.end()) throw ParseError("checkpoint: missing train.step");
  restore(std::move(params), std::move(opt), std::stoull(it->second));
}

std::vector<std::vector<data::SceneWindow>> source_windows(
    std::span<const data::SceneWindow> windows, const data::SplitPlan& plan, bool rotate) {
  std::vector<std::vector<data::SceneWindow>> out(plan.sources.size());
  for (const auto& w : windows) {
    auto it = std::find(plan.sources.begin(), plan.sources.end(), w.domain);
    if (it == plan.sources.end()) continue;
    out[static_cast<std::size_t>(it - plan.sources.begin())].push_back(
        data::normalize_window(w, rotate).first);
  }
  for (std::size_t d = 0; d < out.size(); ++d) {
    if (out[d].empty()) {
      throw ConfigError("source domain " + plan.sources[d].str() +
                        " has no windows after windowing");
    }
  }
  return out;
}

TrainOutputs train(std::span<const data::SceneWindow> windows, const data::SplitPlan& plan,
                   const TrainConfig& config, const std::filesystem::path& out_dir,
                   const std::map<std::string, std::string>& provenance,
                   const std::filesystem::path& resume_from) {
  Trainer trainer(config, plan.sources, source_windows(windows, plan, config.rotate));
  if (!resume_from.empty()) trainer.restore(checkpoint::load(resume_from));

  std::filesystem::create_directories(out_dir);
  TrainOutputs out;
  out.log = out_dir / "train_log.csv";
  std::ofstream log(out.log, std::ios::trunc);
  if (!log) throw IoError("cannot write " + out.log.string());
  for (const auto& [k, v] : provenance) log << "# " << k << " = " << v << '\n';
  write_log_header(log);

  trainer.run(trainer.total_steps(), [&](const LogRow& row) {
    write_log_row(log, row);
    if (config.checkpoint_period > 0 && trainer.step() % config.checkpoint_period == 0 &&
        trainer.step() < trainer.total_steps()) {
      checkpoint::save(out_dir / ("checkpoint_step_" + std::to_string(trainer.step()) + ".ckpt"),
                       trainer.to_checkpoint(provenance));
    }
  });
  if (!log) throw IoError("failed writing " + out.log.string());
  out.checkpoint = out_dir / "checkpoint_final.ckpt";
  checkpoint::save(out.checkpoint, trainer.to_checkpoint(provenance));
  out.steps = trainer.step();
  return out;
}

}  // namespace cilf::train
