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

#ifndef CILF_TRAIN_HPP_
#define CILF_TRAIN_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cilf/checkpoint.hpp"
#include "cilf/data.hpp"
#include "cilf/kernels.hpp"
#include "cilf/losses.hpp"
#include "cilf/model.hpp"
#include "cilf/rng.hpp"

namespace cilf::train {

using losses::LossBundle;

// Geometric anneal from `initial` to `final_value` over `decay_steps`, then
// constant. decay_steps == 0 means half of the run.
struct TemperatureSchedule {
  double initial = 2.0;
  double final_value = 0.3;
  std::uint64_t decay_steps = 0;

  double at(std::uint64_t step, std::uint64_t total_steps) const;
};

struct TrainConfig {
  model::ModelConfig model;
  losses::TrainHyperparams hyper;
  std::size_t batch_size = 16;  // per source domain
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_period = 0;  // 0 disables periodic checkpoints
  TemperatureSchedule schedule;
  bool rotate = false;  // heading normalization
  kernels::Exec exec = kernels::Exec::parallel;

  void validate() const;  // throws ConfigError
};

std::map<std::string, std::string> to_key_values(const TrainConfig& config);

// Adaptive-moment state; moments mirror the parameter layout and each group
// keeps its own step count.
struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::array<std::uint64_t, model::kParamGroupCount> steps{};

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

OptimizerState make_optimizer_state(const model::ModelParams& params);

// Normalized windows from one source domain.
struct DomainBatch {
  data::DomainId domain;
  std::vector<const data::SceneWindow*> windows;
};

struct StepEvaluation {
  LossBundle losses;
  // Routed gradient: backbone entries hold d objective_backbone, V-branch
  // entries d objective_v, mask entries d objective_mask.
  std::vector<double> gradient;
};

// Forward + losses + routed gradient at fixed Gumbel noise (window-major in
// batch order, v_dim values per window).
StepEvaluation evaluate_step(const model::Network& net, std::span<const DomainBatch> batches,
                             const model::ModelParams& params, const TrainConfig& config,
                             std::span<const double> noise, double temperature,
                             bool with_gradient = true);

// One optimizer step. Draws fresh noise from `rng`, updates each scheduled
// group from its own objective's gradient (all taken at the incoming
// parameters). `applied`, when given, receives the routed gradient.
LossBundle train_step(const model::Network& net, std::span<const DomainBatch> batches,
                      model::ModelParams& params, OptimizerState& opt, const TrainConfig& config,
                      std::uint64_t step, double temperature, Rng& rng,
                      std::vector<double>* applied = nullptr);

struct LogRow {
  std::uint64_t step = 0;
  LossBundle losses;
  double gumbel_tau = 0.0;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const LogRow& row);

// Domain-balanced alternating trainer over normalized windows.
class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<data::DomainId> domains,
          std::vector<std::vector<data::SceneWindow>> windows);

  const TrainConfig& config() const { return config_; }
  const model::Network& network() const { return net_; }
  const model::ModelParams& params() const { return params_; }
  const OptimizerState& optimizer() const { return opt_; }
  const std::vector<data::DomainId>& domains() const { return domains_; }
  std::uint64_t step() const { return step_; }
  std::uint64_t steps_per_epoch() const { return steps_per_epoch_; }
  std::uint64_t total_steps() const { return steps_per_epoch_ * config_.epochs; }
  double temperature_at(std::uint64_t step) const;

  // Window indices (per domain) consumed at `step`.
  std::vector<std::vector<std::size_t>> batch_indices(std::uint64_t step) const;

  LogRow run_step();
  void run(std::uint64_t until_step, const std::function<void(const LogRow&)>& on_step = {});

  void restore(model::ModelParams params, OptimizerState opt, std::uint64_t step);
  checkpoint::Container to_checkpoint(const std::map<std::string, std::string>& extra = {}) const;
  void restore(const checkpoint::Container& container);

 private:
  TrainConfig config_;
  model::Network net_;
  std::vector<data::DomainId> domains_;
  std::vector<std::vector<data::SceneWindow>> windows_;
  model::ModelParams params_;
  OptimizerState opt_;
  std::uint64_t step_ = 0;
  std::uint64_t steps_per_epoch_ = 0;
};

// Groups raw windows by source domain and normalizes them. Throws
// ConfigError when a source domain has no windows.
std::vector<std::vector<data::SceneWindow>> source_windows(
    std::span<const data::SceneWindow> windows, const data::SplitPlan& plan, bool rotate);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::uint64_t steps = 0;
};

// Full run: writes `train_log.csv`, periodic `checkpoint_step_<n>.ckpt` and
// `checkpoint_final.ckpt` into `out_dir`. `provenance` is embedded in every
// artifact.
TrainOutputs train(std::span<const data::SceneWindow> windows, const data::SplitPlan& plan,
                   const TrainConfig& config, const std::filesystem::path& out_dir,
                   const std::map<std::string, std::string>& provenance = {},
                   const std::filesystem::path& resume_from = {});

}  // namespace cilf::train

#endif  // CILF_TRAIN_HPP_
