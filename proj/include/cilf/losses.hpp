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

#ifndef CILF_LOSSES_HPP_
#define CILF_LOSSES_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "cilf/model.hpp"

namespace cilf::losses {

enum class IrmMode {
  // Squared derivative of each domain risk w.r.t. a scalar multiplier on the
  // IC-only prediction, taken at 1.0.
  dummy_scalar,
  // Squared norm of the domain risk gradient w.r.t. all decoder parameters.
  full_decoder,
};

struct TrainHyperparams {
  double lambda = 1e-4;       // IRM weight
  double alpha = 0.1;         // contrastive weight
  double tau_contrast = 0.1;  // contrastive temperature
  std::size_t mask_update_period = 1;
  double lr_backbone = 1e-3;
  double lr_v = 1e-3;
  double lr_mask = 1e-3;
  IrmMode irm_mode = IrmMode::dummy_scalar;
  // Use alpha * l_irm in the V objective, as the printed objective reads.
  bool literal_v_objective = false;
  bool update_backbone = true;
  bool update_v = true;
  bool update_mask = true;

  void validate() const;  // throws ConfigError
};

struct LossBundle {
  double l_causal = 0.0;
  double l_spurious = 0.0;
  double l_irm = 0.0;
  double l_contrast = 0.0;
  double objective_backbone = 0.0;
  double objective_v = 0.0;
  double objective_mask = 0.0;

  friend bool operator==(const LossBundle&, const LossBundle&) = default;
};

// sqrt(mean((pred - gt)^2)) over every element. When `grad` is non-empty it
// receives d/dpred (zero at a perfect fit).
double rmse_loss(std::span<const double> pred, std::span<const double> gt,
                 std::span<double> grad = {});

struct DomainPredictions {
  std::span<const double> pred;
  std::span<const double> gt;
};

// (1/|S|) sum_s (dR_s/dw at w = 1)^2 with R_s(w) = mean((w * pred - gt)^2).
// `grads`, when given, is resized to one d/dpred vector per domain.
double irm_penalty(std::span<const DomainPredictions> domains,
                   std::vector<std::vector<double>>* grads = nullptr);

// Mean over same-domain ordered pairs (i, j), i != j, of
//   -log( exp(sim_ij / tau) / (exp(sim_ij / tau) + sum_{k: S_k != S_i} exp(sim_ik / tau)) )
// with cosine similarity. Returns 0 when no sample has a same-domain partner.
double contrastive_loss(std::span<const model::Vector> projections,
                        std::span<const std::size_t> labels, double tau,
                        std::vector<model::Vector>* grads = nullptr);

LossBundle compose_objectives(double l_causal, double l_spurious, double l_irm,
                              double l_contrast, const TrainHyperparams& hyper);

}  // namespace cilf::losses

#endif  // CILF_LOSSES_HPP_
