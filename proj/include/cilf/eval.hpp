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


#ifndef CILF_EVAL_HPP_
#define CILF_EVAL_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cilf/data.hpp"
#include "cilf/kernels.hpp"
#include "cilf/model.hpp"

namespace cilf::eval {

// Trajectories are flat (n_windows, steps, 2) row-major arrays.

// Mean per-step L2 distance over all windows and steps. With `per_window_sum`
// the per-window step sum is averaged over windows only (a factor `steps`
// larger).
double ade(std::span<const double> preds, std::span<const double> gts, std::size_t steps,
           bool per_window_sum = false, kernels::Exec exec = kernels::Exec::parallel);
// Mean over windows of the L2 distance at the last step.
double fde(std::span<const double> preds, std::span<const double> gts, std::size_t steps,
           kernels::Exec exec = kernels::Exec::parallel);

// World-frame predictions of the causal branch with hard masks and zero noise.
// Input windows are in the world frame.
std::vector<double> predict(const model::Network& net, const model::ModelParams& params,
                            std::span<const data::SceneWindow> windows, bool rotate,
                            kernels::Exec exec = kernels::Exec::parallel);

// Interleaved world-frame ground-truth futures.
std::vector<double> future_points(std::span<const data::SceneWindow> windows);

// Mean over windows of the noise-free mask at the network's temperature.
// Windows are in the normalized frame.
std::vector<double> mean_mask(const model::Network& net, const model::ModelParams& params,
                              std::span<const data::SceneWindow> windows, model::MaskMode mode,
                              kernels::Exec exec = kernels::Exec::parallel);

enum class Role { source, target };
std::string to_string(Role role);
Role parse_role(const std::string& text);

struct ReportRow {
  data::DomainId domain;
  Role role = Role::source;
  double ade_m = 0.0;
  double fde_m = 0.0;
  std::size_t n_windows = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct PerDomainReport {
  std::vector<ReportRow> rows;
  // Domains of the plan that had no windows and were left out.
  std::vector<data::DomainId> dropped;
  std::map<std::string, std::string> provenance;

  friend bool operator==(const PerDomainReport&, const PerDomainReport&) = default;
};

struct EvalOptions {
  bool rotate = false;
  bool per_window_sum_ade = false;
  kernels::Exec exec = kernels::Exec::parallel;
};

// Rows follow the plan: sources first, then targets.
PerDomainReport evaluate(const model::Network& net, const model::ModelParams& params,
                         std::span<const data::SceneWindow> windows, const data::SplitPlan& plan,
                         const EvalOptions& options = {});

// CSV with `# key = value` provenance lines before the header
// `domain,role,ade_m,fde_m,n_windows`.
void write_report_csv(std::ostream& out, const PerDomainReport& report);
PerDomainReport read_report_csv(std::istream& in);
std::string render_report_table(const PerDomainReport& report);

struct ComparisonRow {
  data::DomainId domain;
  Role role = Role::source;
  double ade_a = 0.0;  // model under test
  double fde_a = 0.0;
  double ade_b = 0.0;  // baseline
  double fde_b = 0.0;
  double ade_increment = 0.0;  // (baseline - model) / baseline
  double fde_increment = 0.0;
};

struct Comparison {
  std::string label_a;
  std::string label_b;
  std::vector<ComparisonRow> rows;
  // Mean increment per role, over that role's rows.
  std::map<Role, double> mean_ade_increment;
  std::map<Role, double> mean_fde_increment;
};

// (baseline - model) / baseline. Zero baseline with zero model gives 0.
double increment(double model_value, double baseline_value);

// Throws DataError unless both reports cover the same domains with the same
// roles.
Comparison compare_reports(const PerDomainReport& a, const PerDomainReport& b,
                           std::string label_a = "cilf", std::string label_b = "vanilla");
std::string render_comparison(const Comparison& comparison);
void write_comparison_csv(std::ostream& out, const Comparison& comparison);

struct PlotData {
  std::map<std::string, std::string> metadata;
  std::string scene_id;
  std::string ego_id;
  data::DomainId domain;
  std::vector<data::TrackPoint> history;
  std::vector<data::TrackPoint> future;
  std::vector<data::TrackPoint> prediction;
  std::vector<data::AgentTrack> neighbors;

  friend bool operator==(const PlotData&, const PlotData&) = default;
};

// `prediction` holds interleaved world-frame points for the window's future
// frames.
PlotData make_plot_data(const data::SceneWindow& window, std::span<const double> prediction);
void write_plot_data(std::ostream& out, const PlotData& plot);
PlotData parse_plot_data(std::istream& in);
void emit_plot_data(const data::SceneWindow& window, std::span<const double> prediction,
                    const std::filesystem::path& path,
                    const std::map<std::string, std::string>& metadata = {});

}  // namespace cilf::eval

#endif  // CILF_EVAL_HPP_
