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

#ifndef CILF_DATA_HPP_
#define CILF_DATA_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cilf::data {

inline constexpr std::size_t kObsLen = 30;
inline constexpr std::size_t kPredLen = 50;
inline constexpr double kFrameRateHz = 10.0;

struct TrackPoint {
  std::int64_t frame = 0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct AgentTrack {
  std::string agent_id;
  std::vector<TrackPoint> points;  // strictly increasing frames

  friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

struct DomainId {
  std::string dataset;
  std::string subset;

  std::string str() const { return dataset + "/" + subset; }
  friend auto operator<=>(const DomainId&, const DomainId&) = default;
};

// "interaction/roundabout-0" -> {interaction, roundabout-0}.
DomainId parse_domain_id(const std::string& text);

struct Scene {
  std::string scene_id;
  DomainId domain;
  std::vector<AgentTrack> tracks;
  std::vector<double> context;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct NeighborSlot {
  bool valid = false;
  std::string agent_id;
  std::vector<TrackPoint> points;  // obs_len points when valid, zeros otherwise

  friend bool operator==(const NeighborSlot&, const NeighborSlot&) = default;
};

struct SceneWindow {
  std::string scene_id;
  std::string ego_id;
  DomainId domain;
  std::vector<TrackPoint> ego_obs;
  std::vector<TrackPoint> ego_future;
  std::vector<NeighborSlot> neighbors;  // exactly max_neighbors slots
  std::vector<double> context;

  std::size_t valid_neighbor_count() const;
  friend bool operator==(const SceneWindow&, const SceneWindow&) = default;
};

struct NormalizationState {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double rotation = 0.0;  // radians; applied after translation
};

struct WindowOptions {
  std::size_t obs_len = kObsLen;
  std::size_t pred_len = kPredLen;
  std::size_t stride = 10;
  double neighbor_radius = 30.0;
  std::size_t max_neighbors = 8;
};

// Canonical CSV: header `scene_id,agent_id,frame,x,y`. Rows of an agent must
// appear with strictly increasing frames. An empty stream yields no scenes.
std::vector<Scene> parse_canonical_csv(std::istream& in, const DomainId& domain);
void write_canonical_csv(std::ostream& out, std::span<const Scene> scenes);

// Context sidecar: header `scene_id,c0,c1,...`.
std::map<std::string, std::vector<double>> parse_context_csv(std::istream& in);
void write_context_csv(std::ostream& out, std::span<const Scene> scenes);
// Copies contexts onto scenes by scene_id; scenes without an entry keep an
// empty context.
void attach_contexts(std::vector<Scene>& scenes,
                     const std::map<std::string, std::vector<double>>& contexts);

// Maximal runs of consecutive frames.
std::vector<AgentTrack> split_contiguous(const AgentTrack& track);

// Number of windows a contiguous run of `run_length` frames yields.
std::size_t window_count(std::size_t run_length, std::size_t obs_len,
                         std::size_t pred_len, std::size_t stride);

std::vector<SceneWindow> window_scenes(std::span<const Scene> scenes,
                                       const WindowOptions& options = {});

// Translates the ego's last observed point to the origin and, when `rotate`
// is set, aligns the ego's last observed heading with +x.
std::pair<SceneWindow, NormalizationState> normalize_window(
    const SceneWindow& window, bool rotate = false);
SceneWindow denormalize_window(const SceneWindow& window,
                               const NormalizationState& state);
// In-place inverse transform of interleaved (x, y) pairs.
void denormalize_points(std::span<double> xy, const NormalizationState& state);

// Dataset adapter: maps source columns onto canonical ones.
struct AdapterConfig {
  std::string dataset;
  std::string scene_column = "scene_id";
  std::string agent_column = "agent_id";
  std::string frame_column = "frame";
  std::string x_column = "x";
  std::string y_column = "y";
  std::int64_t resample = 1;  // keep every n-th frame, frame' = frame / n
  std::string filter_column;  // optional row filter
  std::string filter_value;
};

AdapterConfig parse_adapter_config(std::istream& in);
std::vector<Scene> adapt_csv(std::istream& in, const AdapterConfig& config,
                             const DomainId& domain);

enum class SplitKind {
  single_scenario_intersection,
  single_scenario_roundabout,
  cross_scenario,
  cross_dataset,
  holdout_last,
  all_sources,  // every domain is a source; no target
};

SplitKind parse_split_kind(const std::string& name);
std::string to_string(SplitKind kind);

struct SplitPlan {
  SplitKind kind = SplitKind::cross_scenario;
  std::vector<DomainId> sources;
  std::vector<DomainId> targets;
};

// INTERACTION subsets are matched by the trailing integer of the subset name
// ("roundabout-0", "0" and "DR_USA_Roundabout_FT-0" all denote subset 0).
SplitPlan make_split_plan(SplitKind kind, std::span<const DomainId> available);

}  // namespace cilf::data

#endif  // CILF_DATA_HPP_
