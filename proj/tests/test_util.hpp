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


#ifndef CILF_TESTS_TEST_UTIL_HPP_
#define CILF_TESTS_TEST_UTIL_HPP_

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cilf/data.hpp"
#include "cilf/model.hpp"
#include "cilf/rng.hpp"

namespace cilf::testing {

// Central differences of f at x (x is restored afterwards).
inline std::vector<double> numeric_gradient(const std::function<double()>& f,
                                            std::vector<double>& x, double step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double plus = f();
    x[i] = keep - step;
    const double minus = f();
    x[i] = keep;
    g[i] = (plus - minus) / (2.0 * step);
  }
  return g;
}

// Elementwise |a - n| <= rel * max(|a|, |n|) + abs_floor.
inline ::testing::AssertionResult gradients_close(const std::vector<double>& analytic,
                                                  const std::vector<double>& numeric,
                                                  double rel = 1e-4, double abs_floor = 1e-8) {
  if (analytic.size() != numeric.size()) {
    return ::testing::AssertionFailure() << "size " << analytic.size() << " vs " << numeric.size();
  }
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    if (!(std::abs(a - n) <= rel * std::max(std::abs(a), std::abs(n)) + abs_floor)) {
      return ::testing::AssertionFailure()
             << "element " << i << ": analytic " << a << " numeric " << n;
    }
  }
  return ::testing::AssertionSuccess();
}

// Network small enough for exhaustive finite differences (< 200 parameters
// with the vanilla backbone).
inline model::ModelConfig tiny_config(model::Backbone backbone = model::Backbone::vanilla_rnn) {
  model::ModelConfig c;
  c.ic_dim = 3;
  c.v_dim = 4;
  c.hidden_dim = 3;
  c.k_ratio = 0.5;
  c.gumbel_temperature = 1.5;
  c.projection_dim = 2;
  c.backbone = backbone;
  c.max_neighbors = 3;
  c.context_dim = 2;
  c.pool_dim = 2;
  c.v_encoder = model::VEncoder::mlp;
  return c;
}

inline std::vector<data::TrackPoint> random_track(Rng& rng, std::size_t n, std::int64_t frame0,
                                                  double x0, double y0) {
  std::vector<data::TrackPoint> pts;
  double x = x0, y = y0;
  const double vx = rng.uniform(-1.0, 1.0), vy = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({frame0 + static_cast<std::int64_t>(i), x, y});
    x += vx + rng.normal(0.0, 0.05);
    y += vy + rng.normal(0.0, 0.05);
  }
  return pts;
}

// Normalized-frame window with `valid_neighbors` populated slots.
inline data::SceneWindow random_window(Rng& rng, const model::ModelConfig& c,
                                       std::size_t valid_neighbors, const data::DomainId& domain) {
  data::SceneWindow w;
  w.scene_id = "s" + std::to_string(rng.index(1000));
  w.ego_id = "ego";
  w.domain = domain;
  auto track = random_track(rng, data::kObsLen + data::kPredLen, 0, rng.normal(), rng.normal());
  const double ox = track[data::kObsLen - 1].x, oy = track[data::kObsLen - 1].y;
  for (auto& p : track) {
    p.x -= ox;
    p.y -= oy;
  }
  w.ego_obs.assign(track.begin(), track.begin() + data::kObsLen);
  w.ego_future.assign(track.begin() + data::kObsLen, track.end());
  for (std::size_t k = 0; k < c.max_neighbors; ++k) {
    data::NeighborSlot slot;
    if (k < valid_neighbors) {
      slot.valid = true;
      slot.agent_id = "n" + std::to_string(k);
      slot.points = random_track(rng, data::kObsLen, 0, rng.uniform(-5, 5), rng.uniform(-5, 5));
    } else {
      slot.points.assign(data::kObsLen, data::TrackPoint{});
    }
    w.neighbors.push_back(slot);
  }
  w.context.resize(c.context_dim);
  for (double& v : w.context) v = rng.normal();
  return w;
}

inline std::vector<double> gumbel_noise(Rng& rng, std::size_t n) {
  std::vector<double> g(n);
  for (double& v : g) v = rng.gumbel();
  return g;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cilf_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cilf::testing

#endif  // CILF_TESTS_TEST_UTIL_HPP_
