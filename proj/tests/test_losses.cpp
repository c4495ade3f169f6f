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

#include <gtest/gtest.h>

#include <cmath>

#include "cilf/error.hpp"
#include "cilf/losses.hpp"
#include "cilf/rng.hpp"

namespace cilf::losses {
namespace {

using model::Vector;

double rmse_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    acc += d * d;
  }
  return static_cast<double>(std::sqrt(acc / a.size()));
}

double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

double contrastive_oracle(const std::vector<Vector>& p, const std::vector<std::size_t>& s,
                          double tau) {
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i == j || s[i] != s[j]) continue;
      double denom = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        if (k == i) continue;
        if (k == j || s[k] != s[i]) denom += std::exp(cosine(p[i], p[k]) / tau);
      }
      total += -std::log(std::exp(cosine(p[i], p[j]) / tau) / denom);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / pairs;
}

TEST(Rmse, ZeroAtPerfectFit) {
  std::vector<double> a = {1.0, -2.0, 3.5, 0.25};
  std::vector<double> g(4, 7.0);
  EXPECT_EQ(rmse_loss(a, a, g), 0.0);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Rmse, ConstantOffsetThreeFour) {
  std::vector<double> pred, gt;
  for (int t = 0; t < 50; ++t) {
    pred.insert(pred.end(), {t + 3.0, -t + 4.0});
    gt.insert(gt.end(), {static_cast<double>(t), static_cast<double>(-t)});
  }
  EXPECT_NEAR(rmse_loss(pred, gt), std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(rmse_loss(pred, gt), 3.5355, 1e-4);
}

TEST(Rmse, MatchesLoopOracleOnRandomPairs) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(100), b(100);
    for (auto& v : a) v = rng.normal(0.0, 10.0);
    for (auto& v : b) v = rng.normal(0.0, 10.0);
    EXPECT_NEAR(rmse_loss(a, b), rmse_oracle(a, b), 1e-12);
  }
}

TEST(Rmse, ShapeMismatchIsAnError) {
  std::vector<double> a(4), b(6);
  EXPECT_THROW(rmse_loss(a, b), ArgumentError);
}

TEST(Irm, ZeroAtZeroRiskModel) {
  std::vector<double> y1 = {1.0, 2.0, 3.0, 4.0}, y2 = {-1.0, 0.5};
  std::vector<DomainPredictions> d = {{y1, y1}, {y2, y2}};
  EXPECT_EQ(irm_penalty(d), 0.0);
}

TEST(Irm, OneDimensionalClosedFormIsFour) {
  std::vector<double> pred = {1.0}, gt = {0.0};
  std::vector<DomainPredictions> d = {{pred, gt}};
  EXPECT_EQ(irm_penalty(d), 4.0);
}

TEST(Irm, TwoEqualDomainsMatchOneDomain) {
  std::vector<double> pred = {1.0, 0.3}, gt = {0.0, 0.7};
  std::vector<DomainPredictions> one = {{pred, gt}};
  std::vector<DomainPredictions> two = {{pred, gt}, {pred, gt}};
  EXPECT_DOUBLE_EQ(irm_penalty(two), irm_penalty(one));
}

TEST(Irm, MatchesDerivativeOracleAndIsPermutationInvariant) {
  Rng rng(12);
  std::vector<std::vector<double>> preds(4), gts(4);
  for (std::size_t d = 0; d < 4; ++d) {
    const std::size_t n = 2 * (d + 3);
    for (std::size_t i = 0; i < n; ++i) {
      preds[d].push_back(rng.normal());
      gts[d].push_back(rng.normal());
    }
  }
  double oracle = 0.0;
  for (std::size_t d = 0; d < 4; ++d) {
    double dr = 0.0;
    for (std::size_t i = 0; i < preds[d].size(); ++i) {
      dr += 2.0 * preds[d][i] * (preds[d][i] - gts[d][i]);
    }
    dr /= static_cast<double>(preds[d].size());
    oracle += dr * dr;
  }
  oracle /= 4.0;
  std::vector<std::size_t> order = {0, 1, 2, 3};
  std::vector<DomainPredictions> base;
  for (auto i : order) base.push_back({preds[i], gts[i]});
  const double reference = irm_penalty(base);
  EXPECT_NEAR(reference, oracle, 1e-12);
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<DomainPredictions> d;
    for (auto i : order) d.push_back({preds[i], gts[i]});
    EXPECT_NEAR(irm_penalty(d), reference, 1e-14 * std::max(1.0, reference));
  }
}

TEST(Irm, EmptyDomainBatchIsAnError) {
  std::vector<double> pred = {1.0}, empty;
  std::vector<DomainPredictions> d = {{pred, pred}, {empty, empty}};
  EXPECT_THROW(irm_penalty(d), ArgumentError);
}

TEST(Contrastive, SinglePositivePairWithoutNegativesIsZero) {
  std::vector<Vector> p = {Vector::Unit(3, 0), Vector::Unit(3, 1)};
  std::vector<std::size_t> s = {0, 0};
  EXPECT_NEAR(contrastive_loss(p, s, 0.1), 0.0, 1e-15);
}

TEST(Contrastive, HandComputedOneNegative) {
  Vector a(2), c(2);
  a << 1.0, 0.0;
  c << 0.0, 1.0;
  std::vector<Vector> p = {a, a, c};
  std::vector<std::size_t> s = {0, 0, 1};
  EXPECT_NEAR(contrastive_loss(p, s, 1.0), std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(contrastive_loss(p, s, 1.0), 0.31326168751822286, 1e-12);
}

TEST(Contrastive, MatchesOracleOnRandomBatches) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vector> p;
    std::vector<std::size_t> s;
    for (int i = 0; i < 9; ++i) {
      Vector v(4);
      for (auto& x : v) x = rng.normal();
      p.push_back(v);
      s.push_back(rng.index(3));
    }
    EXPECT_NEAR(contrastive_loss(p, s, 0.5), contrastive_oracle(p, s, 0.5), 1e-12);
  }
}

TEST(Contrastive, ScaleInvariant) {
  Rng rng(14);
  std::vector<Vector> p;
  std::vector<std::size_t> s = {0, 0, 1, 1, 2};
  for (int i = 0; i < 5; ++i) p.push_back(Vector::NullaryExpr(3, [&] { return rng.normal(); }));
  const double base = contrastive_loss(p, s, 0.2);
  p[2] *= 5.0;
  EXPECT_NEAR(contrastive_loss(p, s, 0.2), base, 1e-12);
}

TEST(Contrastive, DecreasesAsPositivePairAligns) {
  Vector a(2), b(2), c(2);
  a << 1.0, 0.0;
  c << -0.2, 1.0;
  std::vector<std::size_t> s = {0, 0, 1};
  double previous = std::numeric_limits<double>::infinity();
  for (double angle = 2.0; angle >= 0.0; angle -= 0.25) {
    b << std::cos(angle), std::sin(angle);
    const std::vector<Vector> p = {a, b, c};
    const double l = contrastive_loss(p, s, 0.5);
    EXPECT_LT(l, previous);
    previous = l;
  }
}

TEST(Contrastive, ZeroNormProjectionIsNumericError) {
  std::vector<Vector> p = {Vector::Zero(2), Vector::Unit(2, 0)};
  std::vector<std::size_t> s = {0, 0};
  EXPECT_THROW(contrastive_loss(p, s, 0.1), NumericError);
}

TEST(Compose, ZeroWeightsCollapseToPredictionLosses) {
  TrainHyperparams h;
  h.lambda = 0.0;
  h.alpha = 0.0;
  const auto b = compose_objectives(1.25, 0.5, 3.0, 2.0, h);
  EXPECT_EQ(b.objective_backbone, 1.75);
  EXPECT_EQ(b.objective_v, 1.75);
}

TEST(Compose, MaskObjectiveIsCausalMinusSpurious) {
  TrainHyperparams h;
  EXPECT_DOUBLE_EQ(compose_objectives(1.0, 0.4, 0.0, 0.0, h).objective_mask, 0.6);
  double previous = std::numeric_limits<double>::infinity();
  for (double ls = 0.0; ls < 3.0; ls += 0.5) {
    const double m = compose_objectives(1.0, ls, 0.2, 0.3, h).objective_mask;
    EXPECT_LT(m, previous);
    previous = m;
  }
}

TEST(Compose, WeightsApplyToTheirTerms) {
  TrainHyperparams h;
  h.lambda = 2.0;
  h.alpha = 0.5;
  const auto b = compose_objectives(1.0, 2.0, 3.0, 4.0, h);
  EXPECT_DOUBLE_EQ(b.objective_backbone, 1.0 + 2.0 + 6.0);
  EXPECT_DOUBLE_EQ(b.objective_v, 1.0 + 2.0 + 2.0);
  EXPECT_EQ(b.l_irm, 3.0);
  EXPECT_EQ(b.l_contrast, 4.0);
  h.literal_v_objective = true;
  EXPECT_DOUBLE_EQ(compose_objectives(1.0, 2.0, 3.0, 4.0, h).objective_v, 1.0 + 2.0 + 1.5);
}

TEST(Hyperparams, NegativeWeightsAreRejected) {
  TrainHyperparams h;
  h.lambda = -1.0;
  EXPECT_THROW(h.validate(), ConfigError);
  h.lambda = 0.0;
  h.tau_contrast = 0.0;
  EXPECT_THROW(h.validate(), ConfigError);
}

}  // namespace
}  // namespace cilf::losses
