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
#include <fstream>
#include <limits>

#include "cilf/error.hpp"
#include "cilf/train.hpp"
#include "test_util.hpp"

namespace cilf {
namespace {

using model::ParamGroup;
using testing::gradients_close;
using testing::numeric_gradient;

struct StepFixture {
  train::TrainConfig config;
  model::Network net;
  model::ModelParams params;
  std::vector<std::vector<data::SceneWindow>> windows;
  std::vector<train::DomainBatch> batches;

  explicit StepFixture(double lambda = 0.7, double alpha = 0.3,
                       losses::IrmMode irm = losses::IrmMode::dummy_scalar)
      : config(make_config(lambda, alpha, irm)), net(config.model) {
    params = net.make_params();
    net.init_params(params, 3);
    Rng rng(17);
    for (double& v : params.values()) v += 0.2 * rng.normal();
    windows.resize(2);
    for (std::size_t d = 0; d < 2; ++d) {
      for (int i = 0; i < 3; ++i) {
        windows[d].push_back(testing::random_window(rng, config.model, 1,
                                                    {"t", "d" + std::to_string(d)}));
      }
    }
    for (std::size_t d = 0; d < 2; ++d) {
      train::DomainBatch b;
      b.domain = windows[d].front().domain;
      for (const auto& w : windows[d]) b.windows.push_back(&w);
      batches.push_back(b);
    }
  }

  static train::TrainConfig make_config(double lambda, double alpha, losses::IrmMode irm) {
    train::TrainConfig c;
    c.model = testing::tiny_config();
    c.hyper.lambda = lambda;
    c.hyper.alpha = alpha;
    c.hyper.tau_contrast = 0.5;
    c.hyper.irm_mode = irm;
    c.batch_size = 3;
    c.exec = kernels::Exec::serial;
    return c;
  }

  std::vector<double> group_slice(const std::vector<double>& full, ParamGroup g) const {
    std::vector<double> out;
    const auto groups = params.element_groups();
    for (std::size_t e = 0; e < full.size(); ++e) {
      if (groups[e] == g) out.push_back(full[e]);
    }
    return out;
  }

  // Finite differences of one objective over the elements of one group.
  std::vector<double> numeric(ParamGroup g, const std::vector<double>& noise, double temperature,
                              const std::function<double(const losses::LossBundle&)>& pick) {
    const auto groups = params.element_groups();
    std::vector<double> out;
    for (std::size_t e = 0; e < params.size(); ++e) {
      if (groups[e] != g) continue;
      std::vector<double> x = {params.values()[e]};
      auto f = [&] {
        params.values()[e] = x[0];
        return pick(train::evaluate_step(net, batches, params, config, noise, temperature, false)
                        .losses);
      };
      out.push_back(numeric_gradient(f, x, 1e-5)[0]);
      params.values()[e] = x[0];
    }
    return out;
  }
};

constexpr double kTemperature = 6.0;

class RoutingTest : public ::testing::TestWithParam<losses::IrmMode> {};

TEST_P(RoutingTest, EachGroupFollowsItsObjective) {
  StepFixture f(0.7, 0.3, GetParam());
  Rng rng(99);
  Rng replay = rng;
  std::vector<double> applied;
  train::OptimizerState opt = train::make_optimizer_state(f.params);
  model::ModelParams before = f.params;
  train::train_step(f.net, f.batches, f.params, opt, f.config, 0, kTemperature, rng, &applied);
  f.params = before;

  std::vector<double> noise(6 * f.config.model.v_dim);
  for (double& g : noise) g = replay.gumbel();

  const double tol = GetParam() == losses::IrmMode::dummy_scalar ? 1e-4 : 1e-3;
  auto backbone = f.numeric(ParamGroup::backbone, noise, kTemperature, [](const auto& b) {
    return b.objective_backbone;
  });
  auto vgroup = f.numeric(ParamGroup::v_branch, noise, kTemperature,
                          [](const auto& b) { return b.objective_v; });
  auto mask = f.numeric(ParamGroup::mask, noise, kTemperature,
                        [](const auto& b) { return b.objective_mask; });
  EXPECT_TRUE(gradients_close(f.group_slice(applied, ParamGroup::backbone), backbone, tol));
  EXPECT_TRUE(gradients_close(f.group_slice(applied, ParamGroup::v_branch), vgroup, 1e-4));
  EXPECT_TRUE(gradients_close(f.group_slice(applied, ParamGroup::mask), mask, 1e-4));
}

INSTANTIATE_TEST_SUITE_P(IrmModes, RoutingTest,
                         ::testing::Values(losses::IrmMode::dummy_scalar,
                                           losses::IrmMode::full_decoder));

TEST(Routing, SpuriousTermSignDiffersBetweenMaskAndBackbone) {
  StepFixture f(0.0, 0.0);
  Rng rng(5);
  const auto noise = testing::gumbel_noise(rng, 6 * f.config.model.v_dim);
  const auto eval = train::evaluate_step(f.net, f.batches, f.params, f.config, noise,
                                         kTemperature);
  auto spurious_mask = f.numeric(ParamGroup::mask, noise, kTemperature,
                                 [](const auto& b) { return b.l_spurious; });
  auto causal_mask = f.numeric(ParamGroup::mask, noise, kTemperature,
                               [](const auto& b) { return b.l_causal; });
  auto spurious_bb = f.numeric(ParamGroup::backbone, noise, kTemperature,
                               [](const auto& b) { return b.l_spurious; });
  auto causal_bb = f.numeric(ParamGroup::backbone, noise, kTemperature,
                             [](const auto& b) { return b.l_causal; });
  std::vector<double> mask_expected, bb_expected;
  for (std::size_t i = 0; i < causal_mask.size(); ++i) {
    mask_expected.push_back(causal_mask[i] - spurious_mask[i]);
  }
  for (std::size_t i = 0; i < causal_bb.size(); ++i) {
    bb_expected.push_back(causal_bb[i] + spurious_bb[i]);
  }
  EXPECT_TRUE(gradients_close(f.group_slice(eval.gradient, ParamGroup::mask), mask_expected));
  EXPECT_TRUE(gradients_close(f.group_slice(eval.gradient, ParamGroup::backbone), bb_expected));
}

TEST(Routing, LiteralVObjectiveDropsContrastFromVGroup) {
  StepFixture f(0.7, 0.3);
  f.config.hyper.literal_v_objective = true;
  Rng rng(6);
  const auto noise = testing::gumbel_noise(rng, 6 * f.config.model.v_dim);
  const auto eval = train::evaluate_step(f.net, f.batches, f.params, f.config, noise,
                                         kTemperature);
  EXPECT_DOUBLE_EQ(eval.losses.objective_v,
                   eval.losses.l_causal + eval.losses.l_spurious + 0.3 * eval.losses.l_irm);
  auto vgroup = f.numeric(ParamGroup::v_branch, noise, kTemperature,
                          [](const auto& b) { return b.objective_v; });
  EXPECT_TRUE(gradients_close(f.group_slice(eval.gradient, ParamGroup::v_branch), vgroup));
}

TEST(Routing, ObjectivesCompose) {
  StepFixture f;
  Rng rng(7);
  const auto noise = testing::gumbel_noise(rng, 6 * f.config.model.v_dim);
  const auto b =
      train::evaluate_step(f.net, f.batches, f.params, f.config, noise, kTemperature).losses;
  EXPECT_DOUBLE_EQ(b.objective_backbone, b.l_causal + b.l_spurious + 0.7 * b.l_irm);
  EXPECT_DOUBLE_EQ(b.objective_v, b.l_causal + b.l_spurious + 0.3 * b.l_contrast);
  EXPECT_DOUBLE_EQ(b.objective_mask, b.l_causal - b.l_spurious);
}

TEST(TrainStep, NonFiniteLossNamesTheTerm) {
  StepFixture f;
  f.windows[0][0].ego_future[3].x = std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  auto opt = train::make_optimizer_state(f.params);
  try {
    train::train_step(f.net, f.batches, f.params, opt, f.config, 4, 1.0, rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("l_causal"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("step 4"), std::string::npos) << e.what();
  }
}

TEST(TrainStep, MaskGroupOnlyMovesOnScheduledSteps) {
  StepFixture f;
  f.config.hyper.mask_update_period = 2;
  auto opt = train::make_optimizer_state(f.params);
  const auto groups = f.params.element_groups();
  for (std::uint64_t step = 0; step < 4; ++step) {
    const auto before = f.params.values();
    Rng rng(step);
    train::train_step(f.net, f.batches, f.params, opt, f.config, step, 1.0, rng);
    bool mask_moved = false, backbone_moved = false;
    for (std::size_t e = 0; e < groups.size(); ++e) {
      if (before[e] == f.params.values()[e]) continue;
      if (groups[e] == ParamGroup::mask) mask_moved = true;
      if (groups[e] == ParamGroup::backbone) backbone_moved = true;
    }
    EXPECT_EQ(mask_moved, step % 2 == 0) << "step " << step;
    EXPECT_TRUE(backbone_moved);
  }
  EXPECT_EQ(opt.steps[static_cast<std::size_t>(ParamGroup::mask)], 2u);
  EXPECT_EQ(opt.steps[static_cast<std::size_t>(ParamGroup::backbone)], 4u);
}

TEST(TrainStep, ZeroLearningRatesLeaveParametersBitIdentical) {
  StepFixture f;
  f.config.hyper.lr_backbone = 0.0;
  f.config.hyper.lr_v = 0.0;
  f.config.hyper.lr_mask = 0.0;
  auto opt = train::make_optimizer_state(f.params);
  const auto before = f.params.values();
  for (std::uint64_t step = 0; step < 3; ++step) {
    Rng rng(step);
    train::train_step(f.net, f.batches, f.params, opt, f.config, step, 1.0, rng);
  }
  EXPECT_EQ(f.params.values(), before);
}

TEST(TrainStep, FrozenBackboneAndVOnlyMoveTheMask) {
  StepFixture f;
  f.config.hyper.update_backbone = false;
  f.config.hyper.update_v = false;
  auto opt = train::make_optimizer_state(f.params);
  const auto groups = f.params.element_groups();
  const auto before = f.params.values();
  Rng rng(7);
  train::train_step(f.net, f.batches, f.params, opt, f.config, 0, 1.0, rng);
  bool mask_moved = false;
  for (std::size_t e = 0; e < groups.size(); ++e) {
    if (groups[e] == ParamGroup::mask) {
      mask_moved |= before[e] != f.params.values()[e];
    } else {
      EXPECT_EQ(before[e], f.params.values()[e]) << "element " << e;
    }
  }
  EXPECT_TRUE(mask_moved);
}

TEST(Schedule, GeometricAnnealThenFrozen) {
  train::TemperatureSchedule s;
  EXPECT_DOUBLE_EQ(s.at(0, 100), 2.0);
  EXPECT_NEAR(s.at(25, 100), std::sqrt(2.0 * 0.3), 1e-12);
  EXPECT_DOUBLE_EQ(s.at(50, 100), 0.3);
  EXPECT_DOUBLE_EQ(s.at(99, 100), 0.3);
  s.decay_steps = 10;
  EXPECT_DOUBLE_EQ(s.at(10, 100), 0.3);
  EXPECT_NEAR(s.at(5, 100), std::sqrt(2.0 * 0.3), 1e-12);
}

// Two-domain trainer over random windows.
struct TrainerFixture {
  train::TrainConfig config;
  std::vector<data::DomainId> domains = {{"t", "a"}, {"t", "b"}};
  std::vector<std::vector<data::SceneWindow>> windows;

  explicit TrainerFixture(std::size_t per_domain = 64, std::size_t batch = 8) {
    config.model = testing::tiny_config();
    config.batch_size = batch;
    config.epochs = 1;
    config.seed = 5;
    config.exec = kernels::Exec::serial;
    Rng rng(23);
    windows.resize(2);
    for (std::size_t d = 0; d < 2; ++d) {
      for (std::size_t i = 0; i < per_domain; ++i) {
        windows[d].push_back(testing::random_window(rng, config.model, i % 3, domains[d]));
      }
    }
  }

  train::Trainer make() const { return train::Trainer(config, domains, windows); }
};

TEST(Trainer, OneEpochOfSixtyFourWindowsAtBatchEightIsEightSteps) {
  TrainerFixture f;
  auto t = f.make();
  EXPECT_EQ(t.steps_per_epoch(), 8u);
  std::size_t logged = 0;
  t.run(t.total_steps(), [&](const train::LogRow&) { ++logged; });
  EXPECT_EQ(logged, 8u);
}

TEST(Trainer, BatchesAreDomainBalancedAndCoverTheEpoch) {
  TrainerFixture f(20, 8);  // uneven: 3 steps, 24 draws per domain
  auto t = f.make();
  EXPECT_EQ(t.steps_per_epoch(), 3u);
  std::vector<std::vector<int>> seen(2, std::vector<int>(20, 0));
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto idx = t.batch_indices(s);
    ASSERT_EQ(idx.size(), 2u);
    for (std::size_t d = 0; d < 2; ++d) {
      EXPECT_EQ(idx[d].size(), 8u);
      for (auto i : idx[d]) ++seen[d][i];
    }
  }
  for (const auto& domain : seen) {
    for (int c : domain) EXPECT_GE(c, 1);
  }
}

TEST(Trainer, SameSeedGivesIdenticalParameters) {
  TrainerFixture f;
  auto a = f.make();
  auto b = f.make();
  a.run(a.total_steps());
  b.run(b.total_steps());
  EXPECT_EQ(a.params(), b.params());
  EXPECT_EQ(a.optimizer(), b.optimizer());
}

TEST(Trainer, SerialAndParallelAreBitIdentical) {
  TrainerFixture f;
  auto serial = f.make();
  f.config.exec = kernels::Exec::parallel;
  auto parallel = f.make();
  serial.run(serial.total_steps());
  parallel.run(parallel.total_steps());
  EXPECT_EQ(serial.params(), parallel.params());
}

TEST(Trainer, ResumeFromCheckpointIsExact) {
  TrainerFixture f;
  f.config.epochs = 2;
  auto full = f.make();
  full.run(full.total_steps());

  auto first = f.make();
  first.run(5);
  std::stringstream buf;
  checkpoint::write_container(buf, first.to_checkpoint());
  auto resumed = f.make();
  resumed.restore(checkpoint::read_container(buf));
  EXPECT_EQ(resumed.step(), 5u);
  resumed.run(resumed.total_steps());
  EXPECT_EQ(resumed.params(), full.params());
  EXPECT_EQ(resumed.optimizer(), full.optimizer());
}

TEST(Trainer, EmptySourceDomainIsAConfigError) {
  TrainerFixture f;
  f.windows[1].clear();
  EXPECT_THROW(f.make(), ConfigError);
}

TEST(Trainer, UniformMaskHasNoMaskParameters) {
  TrainerFixture f;
  f.config.model.uniform_mask = true;
  f.config.hyper.lambda = 0.0;
  f.config.hyper.alpha = 0.0;
  auto t = f.make();
  for (const auto& info : t.params().tensors()) EXPECT_NE(info.group, ParamGroup::mask);
  t.run(2);
  EXPECT_EQ(t.optimizer().steps[static_cast<std::size_t>(ParamGroup::mask)], 0u);
}

TEST(Train, WritesOneLogRowPerStepAndCheckpoints) {
  TrainerFixture f;
  f.config.checkpoint_period = 3;
  testing::TempDir dir("train");
  std::vector<data::SceneWindow> all;
  for (const auto& d : f.windows) all.insert(all.end(), d.begin(), d.end());
  data::SplitPlan plan;
  plan.sources = f.domains;
  const auto out = train::train(all, plan, f.config, dir.path(), {{"run.seed", "5"}});
  EXPECT_EQ(out.steps, 8u);
  std::ifstream log(out.log);
  std::string line;
  std::size_t rows = 0;
  bool header = false;
  while (std::getline(log, line)) {
    if (line.rfind("#", 0) == 0) continue;
    if (!header) {
      EXPECT_EQ(line,
                "step,l_causal,l_spurious,l_irm,l_contrast,objective_backbone,objective_v,"
                "objective_mask,gumbel_tau");
      header = true;
      continue;
    }
    ++rows;
  }
  EXPECT_EQ(rows, 8u);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoint_step_3.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoint_step_6.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(out.checkpoint));
  const auto c = checkpoint::load(out.checkpoint);
  EXPECT_EQ(c.metadata.at("run.seed"), "5");
  EXPECT_EQ(c.metadata.at("train.step"), "8");
}

}  // namespace
}  // namespace cilf
