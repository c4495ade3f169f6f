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

#include "cilf/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cilf/error.hpp"
#include "text_util.hpp"

namespace cilf::data {
namespace {

constexpr const char* kCanonicalHeader = "scene_id,agent_id,frame,x,y";

struct RawRow {
  std::string scene;
  std::string agent;
  std::int64_t frame;
  double x;
  double y;
  std::size_t line;
};

// Groups rows (already in file or sorted order) into scenes, enforcing the
// per-agent frame ordering.
std::vector<Scene> group_rows(const std::vector<RawRow>& rows,
                              const DomainId& domain) {
  std::vector<Scene> scenes;
  std::unordered_map<std::string, std::size_t> scene_index;
  std::vector<std::unordered_map<std::string, std::size_t>> agent_index;
  for (const RawRow& row : rows) {
    auto [sit, new_scene] = scene_index.try_emplace(row.scene, scenes.size());
    if (new_scene) {
      scenes.push_back(Scene{row.scene, domain, {}, {}});
      agent_index.emplace_back();
    }
    Scene& scene = scenes[sit->second];
    auto& agents = agent_index[sit->second];
    auto [ait, new_agent] = agents.try_emplace(row.agent, scene.tracks.size());
    if (new_agent) scene.tracks.push_back(AgentTrack{row.agent, {}});
    AgentTrack& track = scene.tracks[ait->second];
    if (!track.points.empty()) {
      const std::int64_t last = track.points.back().frame;
      if (row.frame == last) {
        throw DataError("line " + std::to_string(row.line) +
                        ": duplicate row for scene '" + row.scene +
                        "', agent '" + row.agent + "', frame " +
                        std::to_string(row.frame));
      }
      if (row.frame < last) {
        throw DataError("line " + std::to_string(row.line) +
                        ": non-monotone frames for agent '" + row.agent +
                        "' in scene '" + row.scene + "'");
      }
    }
    track.points.push_back(TrackPoint{row.frame, row.x, row.y});
  }
  return scenes;
}

const TrackPoint* point_at(const AgentTrack& track, std::int64_t frame) {
  auto it = std::lower_bound(
      track.points.begin(), track.points.end(), frame,
      [](const TrackPoint& p, std::int64_t f) { return p.frame < f; });
  if (it == track.points.end() || it->frame != frame) return nullptr;
  return &*it;
}

// True when `track` has every frame in [first, first + count).
bool covers(const AgentTrack& track, std::int64_t first, std::size_t count) {
  const TrackPoint* start = point_at(track, first);
  if (start == nullptr) return false;
  const auto offset = static_cast<std::size_t>(start - track.points.data());
  if (offset + count > track.points.size()) return false;
  return track.points[offset + count - 1].frame ==
         first + static_cast<std::int64_t>(count) - 1;
}

void transform_point(double& x, double& y, const NormalizationState& s) {
  const double tx = x - s.origin_x;
  const double ty = y - s.origin_y;
  if (s.rotation == 0.0) {
    x = tx;
    y = ty;
    return;
  }
  const double c = std::cos(s.rotation);
  const double sn = std::sin(s.rotation);
  x = c * tx + sn * ty;
  y = -sn * tx + c * ty;
}

void inverse_point(double& x, double& y, const NormalizationState& s) {
  double rx = x;
  double ry = y;
  if (s.rotation != 0.0) {
    const double c = std::cos(s.rotation);
    const double sn = std::sin(s.rotation);
    rx = c * x - sn * y;
    ry = sn * x + c * y;
  }
  x = rx + s.origin_x;
  y = ry + s.origin_y;
}

template <typename Fn>
SceneWindow map_points(const SceneWindow& window, Fn&& fn) {
  SceneWindow out = window;
  for (auto& p : out.ego_obs) fn(p.x, p.y);
  for (auto& p : out.ego_future) fn(p.x, p.y);
  for (auto& slot : out.neighbors) {
    if (!slot.valid) continue;
    for (auto& p : slot.points) fn(p.x, p.y);
  }
  return out;
}

std::optional<int> trailing_integer(const std::string& text) {
  std::size_t end = text.size();
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(text[begin - 1]))) {
    --begin;
  }
  if (begin == end) return std::nullopt;
  return std::stoi(text.substr(begin));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

DomainId parse_domain_id(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos || slash == 0 || slash + 1 == text.size()) {
    throw ArgumentError("domain id must look like 'dataset/subset': '" + text + "'");
  }
  return DomainId{text.substr(0, slash), text.substr(slash + 1)};
}

std::size_t SceneWindow::valid_neighbor_count() const {
  return static_cast<std::size_t>(std::count_if(
      neighbors.begin(), neighbors.end(),
      [](const NeighborSlot& s) { return s.valid; }));
}

std::vector<Scene> parse_canonical_csv(std::istream& in, const DomainId& domain) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    text::strip_cr(line);
    if (line.empty()) continue;
    if (!have_header) {
      if (line != kCanonicalHeader) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": expected header '" + kCanonicalHeader + "'");
      }
      have_header = true;
      continue;
    }
    const auto fields = text::split(line, ',');
    if (fields.size() != 5) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    RawRow row;
    row.scene = std::string(fields[0]);
    row.agent = std::string(fields[1]);
    row.line = line_no;
    if (row.scene.empty() || row.agent.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty identifier");
    }
    if (!text::parse_int(fields[2], row.frame) || row.frame < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": bad frame '" +
                       std::string(fields[2]) + "'");
    }
    if (!text::parse_double(fields[3], row.x) || !text::parse_double(fields[4], row.y) ||
        !std::isfinite(row.x) || !std::isfinite(row.y)) {
      throw ParseError("line " + std::to_string(line_no) + ": bad coordinate");
    }
    rows.push_back(std::move(row));
  }
  return group_rows(rows, domain);
}

void write_canonical_csv(std::ostream& out, std::span<const Scene> scenes) {
  out << kCanonicalHeader << '\n';
  for (const Scene& scene : scenes) {
    for (const AgentTrack& track : scene.tracks) {
      for (const TrackPoint& p : track.points) {
        out << scene.scene_id << ',' << track.agent_id << ',' << p.frame << ','
            << text::format_double(p.x) << ',' << text::format_double(p.y) << '\n';
      }
    }
  }
}

std::map<std::string, std::vector<double>> parse_context_csv(std::istream& in) {
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    text::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = text::split(line, ',');
    if (!have_header) {
      if (fields.empty() || fields[0] != "scene_id") {
        throw ParseError("line " + std::to_string(line_no) +
                         ": context header must start with 'scene_id'");
      }
      width = fields.size() - 1;
      have_header = true;
      continue;
    }
    if (fields.size() != width + 1) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(width + 1) + " fields");
    }
    std::vector<double> values(width);
    for (std::size_t i = 0; i < width; ++i) {
      if (!text::parse_double(fields[i + 1], values[i]) || !std::isfinite(values[i])) {
        throw ParseError("line " + std::to_string(line_no) + ": bad context value");
      }
    }
    if (!out.emplace(std::string(fields[0]), std::move(values)).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate scene_id '" +
                      std::string(fields[0]) + "'");
    }
  }
  return out;
}

void write_context_csv(std::ostream& out, std::span<const Scene> scenes) {
  const std::size_t width = scenes.empty() ? 0 : scenes.front().context.size();
  out << "scene_id";
  for (std::size_t i = 0; i < width; ++i) out << ",c" << i;
  out << '\n';
  for (const Scene& scene : scenes) {
    if (scene.context.size() != width) {
      throw DataError("scene '" + scene.scene_id + "' has a context of different width");
    }
    out << scene.scene_id;
    for (double v : scene.context) out << ',' << text::format_double(v);
    out << '\n';
  }
}

void attach_contexts(std::vector<Scene>& scenes,
                     const std::map<std::string, std::vector<double>>& contexts) {
  for (Scene& scene : scenes) {
    auto it = contexts.find(scene.scene_id);
    if (it != contexts.end()) scene.context = it->second;
  }
}

std::vector<AgentTrack> split_contiguous(const AgentTrack& track) {
  std::vector<AgentTrack> runs;
  for (std::size_t i = 0; i < track.points.size(); ++i) {
    if (i == 0 || track.points[i].frame != track.points[i - 1].frame + 1) {
      runs.push_back(AgentTrack{track.agent_id, {}});
    }
    runs.back().points.push_back(track.points[i]);
  }
  return runs;
}

std::size_t window_count(std::size_t run_length, std::size_t obs_len,
                         std::size_t pred_len, std::size_t stride) {
  if (obs_len == 0 || pred_len == 0 || stride == 0) {
    throw ArgumentError("obs_len, pred_len and stride must be >= 1");
  }
  const std::size_t span = obs_len + pred_len;
  if (run_length < span) return 0;
  return (run_length - span) / stride + 1;
}

std::vector<SceneWindow> window_scenes(std::span<const Scene> scenes,
                                       const WindowOptions& options) {
  const std::size_t obs = options.obs_len;
  const std::size_t pred = options.pred_len;
  // Validates the lengths as a side effect.
  (void)window_count(0, obs, pred, options.stride);

  std::vector<SceneWindow> windows;
  for (const Scene& scene : scenes) {
    for (const AgentTrack& ego : scene.tracks) {
      for (const AgentTrack& run : split_contiguous(ego)) {
        const std::size_t n = window_count(run.points.size(), obs, pred, options.stride);
        for (std::size_t w = 0; w < n; ++w) {
          const std::size_t start = w * options.stride;
          SceneWindow window;
          window.scene_id = scene.scene_id;
          window.ego_id = ego.agent_id;
          window.domain = scene.domain;
          window.context = scene.context;
          window.ego_obs.assign(run.points.begin() + start,
                                run.points.begin() + start + obs);
          window.ego_future.assign(run.points.begin() + start + obs,
                                   run.points.begin() + start + obs + pred);
          const TrackPoint& anchor = window.ego_obs.back();
          const std::int64_t first_frame = window.ego_obs.front().frame;

          struct Candidate {
            double dist;
            const AgentTrack* track;
          };
          std::vector<Candidate> candidates;
          for (const AgentTrack& other : scene.tracks) {
            if (other.agent_id == ego.agent_id) continue;
            if (!covers(other, first_frame, obs)) continue;
            const TrackPoint* last = point_at(other, anchor.frame);
            const double d = std::hypot(last->x - anchor.x, last->y - anchor.y);
            if (d <= options.neighbor_radius) candidates.push_back({d, &other});
          }
          std::sort(candidates.begin(), candidates.end(),
                    [](const Candidate& a, const Candidate& b) {
                      if (a.dist != b.dist) return a.dist < b.dist;
                      return a.track->agent_id < b.track->agent_id;
                    });
          window.neighbors.assign(options.max_neighbors, NeighborSlot{});
          for (auto& slot : window.neighbors) {
            slot.points.assign(obs, TrackPoint{});
          }
          const std::size_t kept = std::min(candidates.size(), options.max_neighbors);
          for (std::size_t j = 0; j < kept; ++j) {
            NeighborSlot& slot = window.neighbors[j];
            slot.valid = true;
            slot.agent_id = candidates[j].track->agent_id;
            const TrackPoint* p = point_at(*candidates[j].track, first_frame);
            slot.points.assign(p, p + obs);
          }
          windows.push_back(std::move(window));
        }
      }
    }
  }
  return windows;
}

std::pair<SceneWindow, NormalizationState> normalize_window(const SceneWindow& window,
                                                            bool rotate) {
  if (window.ego_obs.empty()) throw ArgumentError("window has no observed points");
  NormalizationState state;
  const TrackPoint& last = window.ego_obs.back();
  state.origin_x = last.x;
  state.origin_y = last.y;
  if (rotate && window.ego_obs.size() >= 2) {
    const TrackPoint& prev = window.ego_obs[window.ego_obs.size() - 2];
    const double dx = last.x - prev.x;
    const double dy = last.y - prev.y;
    if (dx != 0.0 || dy != 0.0) state.rotation = std::atan2(dy, dx);
  }
  SceneWindow out =
      map_points(window, [&](double& x, double& y) { transform_point(x, y, state); });
  return {std::move(out), state};
}

SceneWindow denormalize_window(const SceneWindow& window,
                               const NormalizationState& state) {
  return map_points(window, [&](double& x, double& y) { inverse_point(x, y, state); });
}

void denormalize_points(std::span<double> xy, const NormalizationState& state) {
  if (xy.size() % 2 != 0) throw ArgumentError("interleaved xy span has odd length");
  for (std::size_t i = 0; i < xy.size(); i += 2) inverse_point(xy[i], xy[i + 1], state);
}

AdapterConfig parse_adapter_config(std::istream& in) {
  AdapterConfig config;
  const auto entries = text::parse_key_values(in);
  for (const auto& [key, value] : entries) {
    if (key == "dataset") config.dataset = value;
    else if (key == "scene_id") config.scene_column = value;
    else if (key == "agent_id") config.agent_column = value;
    else if (key == "frame") config.frame_column = value;
    else if (key == "x") config.x_column = value;
    else if (key == "y") config.y_column = value;
    else if (key == "resample") {
      if (!text::parse_int(value, config.resample) || config.resample < 1) {
        throw ConfigError("adapter: resample must be a positive integer");
      }
    } else if (key == "filter_column") config.filter_column = value;
    else if (key == "filter_value") config.filter_value = value;
    else throw ConfigError("adapter: unknown key '" + key + "'");
  }
  if (config.dataset.empty()) throw ConfigError("adapter: missing 'dataset'");
  return config;
}

std::vector<Scene> adapt_csv(std::istream& in, const AdapterConfig& config,
                             const DomainId& domain) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<RawRow> rows;
  std::size_t i_scene = 0, i_agent = 0, i_frame = 0, i_x = 0, i_y = 0, i_filter = 0;
  const bool filtering = !config.filter_column.empty();
  while (std::getline(in, line)) {
    ++line_no;
    text::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = text::split(line, ',');
    if (header.empty()) {
      for (auto f : fields) header.emplace_back(f);
      auto index_of = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
          throw ConfigError("adapter: column '" + name + "' not in input header");
        }
        return static_cast<std::size_t>(it - header.begin());
      };
      i_scene = index_of(config.scene_column);
      i_agent = index_of(config.agent_column);
      i_frame = index_of(config.frame_column);
      i_x = index_of(config.x_column);
      i_y = index_of(config.y_column);
      if (filtering) i_filter = index_of(config.filter_column);
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields");
    }
    if (filtering && fields[i_filter] != config.filter_value) continue;
    RawRow row;
    row.scene = std::string(fields[i_scene]);
    row.agent = std::string(fields[i_agent]);
    row.line = line_no;
    if (!text::parse_int(fields[i_frame], row.frame) || row.frame < 0 ||
        !text::parse_double(fields[i_x], row.x) || !text::parse_double(fields[i_y], row.y) ||
        !std::isfinite(row.x) || !std::isfinite(row.y)) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed row");
    }
    if (row.frame % config.resample != 0) continue;
    row.frame /= config.resample;
    rows.push_back(std::move(row));
  }
  // Source files need not be sorted; order by first appearance of the scene,
  // then agent, then frame.
  std::unordered_map<std::string, std::size_t> first_seen;
  for (const RawRow& r : rows) first_seen.try_emplace(r.scene, first_seen.size());
  std::stable_sort(rows.begin(), rows.end(), [&](const RawRow& a, const RawRow& b) {
    const auto sa = first_seen.at(a.scene);
    const auto sb = first_seen.at(b.scene);
    if (sa != sb) return sa < sb;
    if (a.agent != b.agent) return a.agent < b.agent;
    return a.frame < b.frame;
  });
  return group_rows(rows, domain);
}

SplitKind parse_split_kind(const std::string& name) {
  if (name == "single_scenario_intersection") return SplitKind::single_scenario_intersection;
  if (name == "single_scenario_roundabout") return SplitKind::single_scenario_roundabout;
  if (name == "cross_scenario") return SplitKind::cross_scenario;
  if (name == "cross_dataset") return SplitKind::cross_dataset;
  if (name == "holdout_last") return SplitKind::holdout_last;
  if (name == "all_sources") return SplitKind::all_sources;
  throw ConfigError("unknown split kind '" + name + "'");
}

std::string to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::single_scenario_intersection: return "single_scenario_intersection";
    case SplitKind::single_scenario_roundabout: return "single_scenario_roundabout";
    case SplitKind::cross_scenario: return "cross_scenario";
    case SplitKind::cross_dataset: return "cross_dataset";
    case SplitKind::holdout_last: return "holdout_last";
    case SplitKind::all_sources: return "all_sources";
  }
  return "unknown";
}

SplitPlan make_split_plan(SplitKind kind, std::span<const DomainId> available) {
  SplitPlan plan;
  plan.kind = kind;

  if (kind == SplitKind::holdout_last || kind == SplitKind::all_sources) {
    std::vector<DomainId> sorted(available.begin(), available.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (kind == SplitKind::all_sources) {
      if (sorted.empty()) throw ConfigError("all_sources split needs at least 1 domain");
      plan.sources = std::move(sorted);
      return plan;
    }
    if (sorted.size() < 2) {
      throw ConfigError("holdout_last split needs at least 2 domains, have " +
                        std::to_string(sorted.size()));
    }
    plan.targets = {sorted.back()};
    sorted.pop_back();
    plan.sources = std::move(sorted);
    return plan;
  }

  std::map<int, DomainId> interaction;
  std::vector<DomainId> ngsim;
  for (const DomainId& d : available) {
    const std::string dataset = lower(d.dataset);
    if (dataset == "interaction") {
      if (auto id = trailing_integer(d.subset)) interaction.emplace(*id, d);
    } else if (dataset == "ngsim") {
      ngsim.push_back(d);
    }
  }
  std::sort(ngsim.begin(), ngsim.end());

  std::vector<std::string> missing;
  auto take = [&](std::initializer_list<int> ids, std::vector<DomainId>& into) {
    for (int id : ids) {
      auto it = interaction.find(id);
      if (it == interaction.end()) {
        missing.push_back("interaction subset " + std::to_string(id));
      } else {
        into.push_back(it->second);
      }
    }
  };

  switch (kind) {
    case SplitKind::single_scenario_intersection:
      take({2, 3, 9}, plan.sources);
      take({7}, plan.targets);
      break;
    case SplitKind::single_scenario_roundabout:
      take({4, 6, 10}, plan.sources);
      take({0}, plan.targets);
      break;
    case SplitKind::cross_scenario:
      take({0, 1, 7}, plan.sources);
      take({2, 3, 4, 5, 6, 8, 9, 10}, plan.targets);
      break;
    case SplitKind::cross_dataset:
      take({0, 1, 7}, plan.sources);
      if (ngsim.empty()) missing.push_back("ngsim (any subset)");
      plan.targets = ngsim;
      break;
    case SplitKind::holdout_last:
    case SplitKind::all_sources:
      break;
  }
  if (!missing.empty()) {
    std::string msg = "split '" + to_string(kind) + "' is missing: ";
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i) msg += ", ";
      msg += missing[i];
    }
    throw ConfigError(msg);
  }
  return plan;
}

}  // namespace cilf::data
