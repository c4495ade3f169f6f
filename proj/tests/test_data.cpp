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
#include <set>
#include <sstream>

#include "cilf/data.hpp"
#include "cilf/error.hpp"
#include "cilf/rng.hpp"

namespace cilf::data {
namespace {

const DomainId kDomain{"interaction", "roundabout-0"};

std::vector<Scene> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_canonical_csv(in, kDomain);
}

AgentTrack straight_track(const std::string& id, std::size_t n, double x0, double y0,
                          std::int64_t frame0 = 0) {
  AgentTrack t{id, {}};
  for (std::size_t i = 0; i < n; ++i) {
    t.points.push_back({frame0 + static_cast<std::int64_t>(i), x0 + 0.5 * i, y0 - 0.25 * i});
  }
  return t;
}

TEST(ParseCsv, TwoRowsOneAgent) {
  const auto scenes = parse("scene_id,agent_id,frame,x,y\ns1,a,0,1.0,2.0\ns1,a,1,1.5,2.5\n");
  ASSERT_EQ(scenes.size(), 1u);
  ASSERT_EQ(scenes[0].tracks.size(), 1u);
  EXPECT_EQ(scenes[0].tracks[0].points.size(), 2u);
  EXPECT_EQ(scenes[0].tracks[0].points[1], (TrackPoint{1, 1.5, 2.5}));
  EXPECT_EQ(scenes[0].domain, kDomain);
}

TEST(ParseCsv, TwoSceneIds) {
  const auto scenes = parse("scene_id,agent_id,frame,x,y\ns1,a,0,0,0\ns2,a,0,0,0\n");
  EXPECT_EQ(scenes.size(), 2u);
}

TEST(ParseCsv, EmptyStreamIsEmptySet) { EXPECT_TRUE(parse("").empty()); }

TEST(ParseCsv, DuplicateRowIsDataError) {
  EXPECT_THROW(parse("scene_id,agent_id,frame,x,y\ns1,a,0,0,0\ns1,a,0,1,1\n"), DataError);
}

TEST(ParseCsv, NonMonotoneFramesIsDataError) {
  EXPECT_THROW(parse("scene_id,agent_id,frame,x,y\ns1,a,3,0,0\ns1,a,1,1,1\n"), DataError);
}

TEST(ParseCsv, MalformedRowNamesLine) {
  try {
    parse("scene_id,agent_id,frame,x,y\ns1,a,0,0,0\ns1,a,1,zz,0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("scene_id,agent_id,frame,x,y\ns1,a,0,0\n"), ParseError);
}

TEST(ParseCsv, RoundTripOfRandomScenes) {
  Rng rng(1);
  std::vector<Scene> scenes;
  for (int s = 0; s < 5; ++s) {
    Scene scene{"scene" + std::to_string(s), kDomain, {}, {}};
    for (int a = 0; a < 3; ++a) {
      AgentTrack t{"agent" + std::to_string(a), {}};
      std::int64_t frame = static_cast<std::int64_t>(rng.index(5));
      for (int i = 0; i < 20; ++i) {
        t.points.push_back({frame, rng.normal(0, 100), rng.normal(0, 100)});
        frame += 1 + static_cast<std::int64_t>(rng.index(2));
      }
      scene.tracks.push_back(t);
    }
    scenes.push_back(scene);
  }
  std::stringstream buf;
  write_canonical_csv(buf, scenes);
  EXPECT_EQ(parse_canonical_csv(buf, kDomain), scenes);
}

TEST(ContextCsv, RoundTripAndAttach) {
  std::vector<Scene> scenes = {{"s1", kDomain, {}, {0.5, -1.25}}, {"s2", kDomain, {}, {3.0, 4.0}}};
  std::stringstream buf;
  write_context_csv(buf, scenes);
  const auto contexts = parse_context_csv(buf);
  std::vector<Scene> bare = {{"s1", kDomain, {}, {}}, {"s2", kDomain, {}, {}}};
  attach_contexts(bare, contexts);
  EXPECT_EQ(bare, scenes);
}

TEST(Windowing, CountExamples) {
  EXPECT_EQ(window_count(100, 30, 50, 10), 3u);
  EXPECT_EQ(window_count(80, 30, 50, 10), 1u);
  EXPECT_EQ(window_count(79, 30, 50, 10), 0u);
  EXPECT_THROW(window_count(100, 30, 50, 0), ArgumentError);
}

TEST(Windowing, StartsAtStrideMultiples) {
  Scene scene{"s", kDomain, {straight_track("ego", 100, 0, 0)}, {}};
  const auto windows = window_scenes(std::span(&scene, 1));
  ASSERT_EQ(windows.size(), 3u);
  for (std::size_t w = 0; w < 3; ++w) {
    EXPECT_EQ(windows[w].ego_obs.front().frame, static_cast<std::int64_t>(10 * w));
    EXPECT_EQ(windows[w].ego_obs.size(), kObsLen);
    EXPECT_EQ(windows[w].ego_future.size(), kPredLen);
    EXPECT_EQ(windows[w].ego_future.front().frame, windows[w].ego_obs.back().frame + 1);
  }
}

TEST(Windowing, CountLawOverRandomLengths) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    WindowOptions opt;
    opt.obs_len = 1 + rng.index(20);
    opt.pred_len = 1 + rng.index(20);
    opt.stride = 1 + rng.index(7);
    const std::size_t L = opt.obs_len + opt.pred_len + rng.index(60);
    Scene scene{"s", kDomain, {straight_track("ego", L, 0, 0)}, {}};
    const auto windows = window_scenes(std::span(&scene, 1), opt);
    EXPECT_EQ(windows.size(), (L - opt.obs_len - opt.pred_len) / opt.stride + 1);
  }
}

TEST(Windowing, GapsSplitTracksIntoRuns) {
  AgentTrack t = straight_track("ego", 85, 0, 0);
  AgentTrack tail = straight_track("ego", 80, 0, 0, 200);
  t.points.insert(t.points.end(), tail.points.begin(), tail.points.end());
  EXPECT_EQ(split_contiguous(t).size(), 2u);
  Scene scene{"s", kDomain, {t}, {}};
  WindowOptions opt;
  opt.stride = 5;
  EXPECT_EQ(window_scenes(std::span(&scene, 1), opt).size(), 2u + 1u);
}

TEST(Windowing, NeighborsAreCoVisibleNearestWithinRadius) {
  Scene scene{"s", kDomain, {}, {}};
  scene.tracks.push_back(straight_track("ego", 80, 0, 0));
  scene.tracks.push_back(straight_track("far", 80, 100, 0));
  scene.tracks.push_back(straight_track("late", 80, 1, 0, 5));  // misses early obs frames
  for (int i = 0; i < 10; ++i) {
    scene.tracks.push_back(straight_track("n" + std::to_string(i), 30, 2.0 + i, 0));
  }
  WindowOptions opt;
  opt.max_neighbors = 4;
  const auto windows = window_scenes(std::span(&scene, 1), opt);
  const SceneWindow* ego = nullptr;
  for (const auto& w : windows) {
    if (w.ego_id == "ego") ego = &w;
  }
  ASSERT_NE(ego, nullptr);
  ASSERT_EQ(ego->neighbors.size(), 4u);
  EXPECT_EQ(ego->valid_neighbor_count(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(ego->neighbors[i].agent_id, "n" + std::to_string(i));
    EXPECT_EQ(ego->neighbors[i].points.size(), kObsLen);
  }
}

TEST(Windowing, UnusedSlotsArePaddedInvalid) {
  Scene scene{"s", kDomain, {straight_track("ego", 80, 0, 0)}, {1.0, 2.0}};
  const auto windows = window_scenes(std::span(&scene, 1));
  ASSERT_EQ(windows.size(), 1u);
  EXPECT_EQ(windows[0].valid_neighbor_count(), 0u);
  EXPECT_EQ(windows[0].neighbors.size(), 8u);
  for (const auto& slot : windows[0].neighbors) {
    EXPECT_FALSE(slot.valid);
    EXPECT_EQ(slot.points, std::vector<TrackPoint>(kObsLen));
  }
  EXPECT_EQ(windows[0].context, (std::vector<double>{1.0, 2.0}));
}

SceneWindow random_window(Rng& rng) {
  Scene scene{"s", kDomain, {}, {}};
  for (int a = 0; a < 4; ++a) {
    AgentTrack t{"a" + std::to_string(a), {}};
    double x = rng.normal(0, 20), y = rng.normal(0, 20);
    const double vx = rng.normal(), vy = rng.normal();
    for (int i = 0; i < 80; ++i) {
      t.points.push_back({i, x, y});
      x += vx + rng.normal(0, 0.1);
      y += vy + rng.normal(0, 0.1);
    }
    scene.tracks.push_back(t);
  }
  WindowOptions opt;
  opt.neighbor_radius = 1e6;
  return window_scenes(std::span(&scene, 1), opt).front();
}

TEST(Normalize, TranslationExample) {
  Rng rng(3);
  SceneWindow w = random_window(rng);
  w.ego_obs.back().x = 12.5;
  w.ego_obs.back().y = -3.0;
  const auto [n, state] = normalize_window(w);
  EXPECT_EQ(n.ego_obs.back().x, 0.0);
  EXPECT_EQ(n.ego_obs.back().y, 0.0);
  EXPECT_DOUBLE_EQ(n.ego_obs.front().x, w.ego_obs.front().x - 12.5);
  EXPECT_DOUBLE_EQ(n.ego_future[7].y, w.ego_future[7].y + 3.0);
  EXPECT_DOUBLE_EQ(n.neighbors[0].points[2].x, w.neighbors[0].points[2].x - 12.5);
  EXPECT_EQ(state.rotation, 0.0);
}

TEST(Normalize, AtOriginIsIdentity) {
  Rng rng(4);
  SceneWindow w = random_window(rng);
  const auto [n0, s0] = normalize_window(w);
  const auto [n1, s1] = normalize_window(n0);
  EXPECT_EQ(n1, n0);
}

TEST(Normalize, RoundTripWithinNanometer) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const SceneWindow w = random_window(rng);
    for (bool rotate : {false, true}) {
      const auto [n, state] = normalize_window(w, rotate);
      const SceneWindow back = denormalize_window(n, state);
      auto check = [](const std::vector<TrackPoint>& a, const std::vector<TrackPoint>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
          EXPECT_LE(std::abs(a[i].x - b[i].x), 1e-9);
          EXPECT_LE(std::abs(a[i].y - b[i].y), 1e-9);
          EXPECT_EQ(a[i].frame, b[i].frame);
        }
      };
      check(back.ego_obs, w.ego_obs);
      check(back.ego_future, w.ego_future);
      for (std::size_t k = 0; k < w.neighbors.size(); ++k) {
        if (w.neighbors[k].valid) check(back.neighbors[k].points, w.neighbors[k].points);
      }
    }
  }
}

TEST(Normalize, RotationAlignsHeadingWithX) {
  Rng rng(6);
  const SceneWindow w = random_window(rng);
  const auto [n, state] = normalize_window(w, true);
  const auto& prev = n.ego_obs[kObsLen - 2];
  EXPECT_NEAR(prev.y, 0.0, 1e-9);
  EXPECT_LT(prev.x, 0.0);
  std::vector<double> xy = {n.ego_future[3].x, n.ego_future[3].y};
  denormalize_points(xy, state);
  EXPECT_NEAR(xy[0], w.ego_future[3].x, 1e-9);
  EXPECT_NEAR(xy[1], w.ego_future[3].y, 1e-9);
}

TEST(Adapter, MapsColumnsFiltersAndResamples) {
  std::istringstream cfg(
      "dataset = ngsim\nscene_id = Section\nagent_id = Vehicle_ID\nframe = Frame_ID\n"
      "x = Local_X\ny = Local_Y\nresample = 2\nfilter_column = v_Class\nfilter_value = 2\n");
  const auto config = parse_adapter_config(cfg);
  EXPECT_EQ(config.dataset, "ngsim");
  std::istringstream src(
      "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Class,Section\n"
      "7,10,1.0,2.0,2,us101\n"
      "7,11,1.5,2.5,2,us101\n"
      "7,12,2.0,3.0,2,us101\n"
      "8,10,5.0,5.0,3,us101\n");
  const auto scenes = adapt_csv(src, config, {"ngsim", "us101"});
  ASSERT_EQ(scenes.size(), 1u);
  ASSERT_EQ(scenes[0].tracks.size(), 1u);
  EXPECT_EQ(scenes[0].tracks[0].points,
            (std::vector<TrackPoint>{{5, 1.0, 2.0}, {6, 2.0, 3.0}}));
}

TEST(Adapter, UnknownKeyOrMissingColumnIsConfigError) {
  std::istringstream bad("dataset = x\nspeed = v\n");
  EXPECT_THROW(parse_adapter_config(bad), ConfigError);
  std::istringstream cfg("dataset = x\nx = px\n");
  const auto config = parse_adapter_config(cfg);
  std::istringstream src("scene_id,agent_id,frame,x,y\ns,a,0,0,0\n");
  EXPECT_THROW(adapt_csv(src, config, {"x", "y"}), ConfigError);
}

std::vector<DomainId> interaction_subsets() {
  std::vector<DomainId> out;
  for (int i = 0; i <= 10; ++i) out.push_back({"interaction", "subset-" + std::to_string(i)});
  return out;
}

std::set<std::string> subsets(const std::vector<DomainId>& ids) {
  std::set<std::string> out;
  for (const auto& d : ids) out.insert(d.subset);
  return out;
}

TEST(SplitPlan, CrossScenarioSourcesZeroOneSeven) {
  const auto plan = make_split_plan(SplitKind::cross_scenario, interaction_subsets());
  EXPECT_EQ(subsets(plan.sources),
            (std::set<std::string>{"subset-0", "subset-1", "subset-7"}));
  EXPECT_EQ(plan.targets.size(), 8u);
}

TEST(SplitPlan, SingleScenarioPlans) {
  const auto inter = make_split_plan(SplitKind::single_scenario_intersection, interaction_subsets());
  EXPECT_EQ(subsets(inter.sources),
            (std::set<std::string>{"subset-2", "subset-3", "subset-9"}));
  EXPECT_EQ(subsets(inter.targets), (std::set<std::string>{"subset-7"}));
  const auto round = make_split_plan(SplitKind::single_scenario_roundabout, interaction_subsets());
  EXPECT_EQ(subsets(round.sources),
            (std::set<std::string>{"subset-4", "subset-6", "subset-10"}));
  EXPECT_EQ(subsets(round.targets), (std::set<std::string>{"subset-0"}));
}

TEST(SplitPlan, CrossDatasetNeedsNgsim) {
  EXPECT_THROW(make_split_plan(SplitKind::cross_dataset, interaction_subsets()), ConfigError);
  auto avail = interaction_subsets();
  avail.push_back({"ngsim", "us101"});
  const auto plan = make_split_plan(SplitKind::cross_dataset, avail);
  EXPECT_EQ(plan.targets, (std::vector<DomainId>{{"ngsim", "us101"}}));
}

TEST(SplitPlan, MissingSubsetIsListed) {
  auto avail = interaction_subsets();
  avail.erase(avail.begin() + 7);
  try {
    make_split_plan(SplitKind::cross_scenario, avail);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("subset 7"), std::string::npos) << e.what();
  }
}

TEST(SplitPlan, EveryPlanIsDisjoint) {
  auto avail = interaction_subsets();
  avail.push_back({"ngsim", "i80"});
  for (auto kind : {SplitKind::single_scenario_intersection, SplitKind::single_scenario_roundabout,
                    SplitKind::cross_scenario, SplitKind::cross_dataset, SplitKind::holdout_last}) {
    const auto plan = make_split_plan(kind, avail);
    EXPECT_FALSE(plan.sources.empty());
    EXPECT_FALSE(plan.targets.empty());
    for (const auto& s : plan.sources) {
      EXPECT_EQ(std::count(plan.targets.begin(), plan.targets.end(), s), 0) << to_string(kind);
    }
    EXPECT_EQ(parse_split_kind(to_string(kind)), kind);
  }
}

TEST(SplitPlan, HoldoutLastTakesLastSortedDomain) {
  std::vector<DomainId> avail = {{"synthetic", "domain-02"}, {"synthetic", "domain-00"},
                                 {"synthetic", "domain-01"}};
  const auto plan = make_split_plan(SplitKind::holdout_last, avail);
  EXPECT_EQ(plan.targets, (std::vector<DomainId>{{"synthetic", "domain-02"}}));
  EXPECT_EQ(plan.sources.size(), 2u);
}

TEST(DomainIdText, ParsesDatasetSlashSubset) {
  EXPECT_EQ(parse_domain_id("interaction/roundabout-0"), kDomain);
  EXPECT_EQ(kDomain.str(), "interaction/roundabout-0");
  EXPECT_THROW(parse_domain_id("nosubset"), ArgumentError);
}

}  // namespace
}  // namespace cilf::data
