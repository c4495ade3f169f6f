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

#include "cilf/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cilf/error.hpp"

namespace cilf::losses {

void TrainHyperparams::validate() const {
  if (!(lambda >= 0.0) || !(alpha >= 0.0)) throw ConfigError("train: lambda and alpha must be >= 0");
  if (!(tau_contrast > 0.0)) throw ConfigError("train: tau_contrast must be > 0");
  if (mask_update_period < 1) throw ConfigError("train: mask_update_period must be >= 1");
  if (!(lr_backbone >= 0.0) || !(lr_v >= 0.0) || !(lr_mask >= 0.0)) {
    throw ConfigError("train: learning rates must be >= 0");
  }
}

double rmse_loss(std::span<const double> pred, std::span<const double> gt,
                 std::span<double> grad) {
  if (pred.size() != gt.size()) {
    throw ArgumentError("rmse_loss: pred has " + std::to_string(pred.size()) +
                        " values, gt has " + std::to_string(gt.size()));
  }
  if (pred.empty()) throw ArgumentError("rmse_loss: empty input");
  if (!grad.empty() && grad.size() != pred.size()) {
    throw ArgumentError("rmse_loss: gradient buffer size");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    sum += d * d;
  }
  const double n = static_cast<double>(pred.size());
  const double loss = std::sqrt(sum / n);
  if (!grad.empty()) {
    if (loss == 0.0) {
      std::fill(grad.begin(), grad.end(), 0.0);
    } else {
      const double scale = 1.0 / (n * loss);
      for (std::size_t i = 0; i < pred.size(); ++i) grad[i] = (pred[i] - gt[i]) * scale;
    }
  }
  return loss;
}

double irm_penalty(std::span<const DomainPredictions> domains,
                   std::vector<std::vector<double>>* grads) {
  if (domains.empty()) throw ArgumentError("irm_penalty: no source domains");
  const double n_domains = static_cast<double>(domains.size());
  if (grads != nullptr) grads->assign(domains.size(), {});
  double penalty = 0.0;
  for (std::size_t s = 0; s < domains.size(); ++s) {
    const auto& d = domains[s];
    if (d.pred.empty()) throw ArgumentError("irm_penalty: empty batch for a source domain");
    if (d.pred.size() != d.gt.size()) throw ArgumentError("irm_penalty: pred/gt size mismatch");
    const double count = static_cast<double>(d.pred.size());
    // dR/dw at w = 1 for R(w) = mean((w p - y)^2) is mean(2 (p - y) p).
    double slope = 0.0;
    for (std::size_t e = 0; e < d.pred.size(); ++e) {
      slope += (d.pred[e] - d.gt[e]) * d.pred[e];
    }
    slope *= 2.0 / count;
    penalty += slope * slope;
    if (grads != nullptr) {
      auto& g = (*grads)[s];
      g.resize(d.pred.size());
      const double outer = 2.0 * slope / n_domains * (2.0 / count);
      for (std::size_t e = 0; e < d.pred.size(); ++e) {
        g[e] = outer * (2.0 * d.pred[e] - d.gt[e]);
      }
    }
  }
  return penalty / n_domains;
}

double contrastive_loss(std::span<const model::Vector> projections,
                        std::span<const std::size_t> labels, double tau,
                        std::vector<model::Vector>* grads) {
  const std::size_t n = projections.size();
  if (n < 2) throw ArgumentError("contrastive_loss: need at least 2 samples");
  if (labels.size() != n) throw ArgumentError("contrastive_loss: label count mismatch");
  if (!(tau > 0.0)) throw ArgumentError("contrastive_loss: tau must be > 0");

  std::vector<double> norms(n);
  std::vector<model::Vector> unit(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = projections[i].norm();
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i])) {
      throw NumericError("contrastive_loss: projection " + std::to_string(i) +
                         " has zero or non-finite norm");
    }
    unit[i] = projections[i] / norms[i];
  }
  Eigen::MatrixXd sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = unit[i].dot(unit[k]);
    }
  }

  // d loss / d sim_ik, accumulated over pairs.
  Eigen::MatrixXd g_sim = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  double total = 0.0;
  std::size_t pairs = 0;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    negatives.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (labels[k] != labels[i]) negatives.push_back(k);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      const double pos = sim(ii, jj) / tau;
      double top = pos;
      for (std::size_t k : negatives) top = std::max(top, sim(ii, static_cast<Eigen::Index>(k)) / tau);
      double denom = std::exp(pos - top);
      for (std::size_t k : negatives) denom += std::exp(sim(ii, static_cast<Eigen::Index>(k)) / tau - top);
      total += -(pos - top) + std::log(denom);
      ++pairs;
      if (grads != nullptr) {
        g_sim(ii, jj) += (std::exp(pos - top) / denom - 1.0) / tau;
        for (std::size_t k : negatives) {
          const auto kk = static_cast<Eigen::Index>(k);
          g_sim(ii, kk) += std::exp(sim(ii, kk) / tau - top) / denom / tau;
        }
      }
    }
  }
  if (pairs == 0) {
    if (grads != nullptr) {
      grads->assign(n, model::Vector());
      for (std::size_t i = 0; i < n; ++i) (*grads)[i] = model::Vector::Zero(projections[i].size());
    }
    return 0.0;
  }
  const double inv_pairs = 1.0 / static_cast<double>(pairs);
  if (grads != nullptr) {
    grads->assign(n, model::Vector());
    for (std::size_t i = 0; i < n; ++i) (*grads)[i] = model::Vector::Zero(projections[i].size());
    // d sim(a, b) / d a = (b_hat - sim * a_hat) / |a|
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double g = g_sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        if (g == 0.0) continue;
        const double s = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        (*grads)[i] += g * inv_pairs * (unit[k] - s * unit[i]) / norms[i];
        (*grads)[k] += g * inv_pairs * (unit[i] - s * unit[k]) / norms[k];
      }
    }
  }
  return total * inv_pairs;
}

LossBundle compose_objectives(double l_causal, double l_spurious, double l_irm,
                              double l_contrast, const TrainHyperparams& hyper) {
  LossBundle b;
  b.l_causal = l_causal;
  b.l_spurious = l_spurious;
  b.l_irm = l_irm;
  b.l_contrast = l_contrast;
  b.objective_backbone = l_causal + l_spurious + hyper.lambda * l_irm;
  b.objective_v = l_causal + l_spurious +
                  hyper.alpha * (hyper.literal_v_objective ? l_irm : l_contrast);
  b.objective_mask = l_causal - l_spurious;
  return b;
}

}  // namespace cilf::losses
