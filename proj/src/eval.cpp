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

#include "cilf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "cilf/error.hpp"
#include "text_util.hpp"

namespace cilf::eval {
namespace {

using text::format_double;

void check_shapes(std::span<const double> preds, std::span<const double> gts,
                  std::size_t steps, const char* what) {
  if (steps == 0) throw ArgumentError(std::string(what) + ": zero steps");
  if (preds.empty() || gts.empty()) throw ArgumentError(std::string(what) + ": empty input");
  if (preds.size() != gts.size() || preds.size() % (2 * steps) != 0) {
    throw ArgumentError(std::string(what) + ": shape mismatch (" +
                        std::to_string(preds.size()) + " vs " + std::to_string(gts.size()) +
                        " values, " + std::to_string(steps) + " steps)");
  }
}

struct WindowErrors {
  std::vector<double> mean;
  std::vector<double> final;
};

WindowErrors window_errors(std::span<const double> preds, std::span<const double> gts,
                           std::size_t steps, kernels::Exec exec) {
  const std::size_t n = preds.size() / (2 * steps);
  WindowErrors e{std::vector<double>(n), std::vector<double>(n)};
  kernels::displacement_errors(exec, preds, gts, steps, e.mean, e.final);
  return e;
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

std::vector<const data::SceneWindow*> pointers(std::span<const data::SceneWindow> windows) {
  std::vector<const data::SceneWindow*> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(&w);
  return out;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string percent(double v) { return fixed(100.0 * v, 2) + "%"; }

void write_points(std::ostream& out, const std::vector<data::TrackPoint>& points) {
  for (const auto& p : points) {
    out << p.frame << ',' << format_double(p.x) << ',' << format_double(p.y) << '\n';
  }
}

}  // namespace

double ade(std::span<const double> preds, std::span<const double> gts, std::size_t steps,
           bool per_window_sum, kernels::Exec exec) {
  check_shapes(preds, gts, steps, "ade");
  const double m = mean_of(window_errors(preds, gts, steps, exec).mean);
  return per_window_sum ? m * static_cast<double>(steps) : m;
}

double fde(std::span<const double> preds, std::span<const double> gts, std::size_t steps,
           kernels::Exec exec) {
  check_shapes(preds, gts, steps, "fde");
  return mean_of(window_errors(preds, gts, steps, exec).final);
}

std::vector<double> predict(const model::Network& net, const model::ModelParams& params,
                            std::span<const data::SceneWindow> windows, bool rotate,
                            kernels::Exec exec) {
  std::vector<data::SceneWindow> normalized;
  std::vector<data::NormalizationState> states;
  normalized.reserve(windows.size());
  for (const auto& w : windows) {
    net.check_window(w);
    auto [nw, st] = data::normalize_window(w, rotate);
    normalized.push_back(std::move(nw));
    states.push_back(st);
  }
  const std::vector<double> noise(windows.size() * net.config().v_dim, 0.0);
  std::vector<model::ForwardCache> caches;
  kernels::forward_batch(exec, net, params, pointers(normalized), noise, model::MaskMode::hard,
                         net.config().gumbel_temperature, caches);
  const std::size_t per = data::kPredLen * 2;
  std::vector<double> out(windows.size() * per);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const model::Matrix& pred = caches[i].pred_causal();
    std::copy(pred.data(), pred.data() + per, out.begin() + static_cast<std::ptrdiff_t>(i * per));
    data::denormalize_points(std::span<double>(out).subspan(i * per, per), states[i]);
  }
  return out;
}

std::vector<double> future_points(std::span<const data::SceneWindow> windows) {
  std::vector<double> out;
  out.reserve(windows.size() * data::kPredLen * 2);
  for (const auto& w : windows) {
    if (w.ego_future.size() != data::kPredLen) {
      throw ArgumentError("window " + w.scene_id + "/" + w.ego_id + " has " +
                          std::to_string(w.ego_future.size()) + " future points, expected " +
                          std::to_string(data::kPredLen));
    }
    for (const auto& p : w.ego_future) {
      out.push_back(p.x);
      out.push_back(p.y);
    }
  }
  return out;
}

std::vector<double> mean_mask(const model::Network& net, const model::ModelParams& params,
                              std::span<const data::SceneWindow> windows, model::MaskMode mode,
                              kernels::Exec exec) {
  if (windows.empty()) throw ArgumentError("mean_mask: no windows");
  const std::vector<double> noise(windows.size() * net.config().v_dim, 0.0);
  std::vector<model::ForwardCache> caches;
  kernels::forward_batch(exec, net, params, pointers(windows), noise, mode,
                         net.config().gumbel_temperature, caches);
  std::vector<double> mean(net.config().v_dim, 0.0);
  for (const auto& c : caches) {
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += c.mask_trace.mask[d];
  }
  for (double& m : mean) m /= static_cast<double>(windows.size());
  return mean;
}

std::string to_string(Role role) { return role == Role::source ? "source" : "target"; }

Role parse_role(const std::string& text) {
  if (text == "source") return Role::source;
  if (text == "target") return Role::target;
  throw ParseError("unknown role '" + text + "'");
}

PerDomainReport evaluate(const model::Network& net, const model::ModelParams& params,
                         std::span<const data::SceneWindow> windows, const data::SplitPlan& plan,
                         const EvalOptions& options) {
  PerDomainReport report;
  auto run = [&](const data::DomainId& domain, Role role) {
    std::vector<data::SceneWindow> subset;
    for (const auto& w : windows) {
      if (w.domain == domain) subset.push_back(w);
    }
    if (subset.empty()) {
      std::cerr << "warning: domain " << domain.str() << " has no windows; left out of report\n";
      report.dropped.push_back(domain);
      return;
    }
    const auto preds = predict(net, params, subset, options.rotate, options.exec);
    const auto gts = future_points(subset);
    ReportRow row;
    row.domain = domain;
    row.role = role;
    row.ade_m = ade(preds, gts, data::kPredLen, options.per_window_sum_ade, options.exec);
    row.fde_m = fde(preds, gts, data::kPredLen, options.exec);
    row.n_windows = subset.size();
    report.rows.push_back(row);
  };
  for (const auto& d : plan.sources) run(d, Role::source);
  for (const auto& d : plan.targets) run(d, Role::target);
  return report;
}

void write_report_csv(std::ostream& out, const PerDomainReport& report) {
  for (const auto& [k, v] : report.provenance) out << "# " << k << " = " << v << '\n';
  out << "domain,role,ade_m,fde_m,n_windows\n";
  for (const auto& r : report.rows) {
    out << r.domain.str() << ',' << to_string(r.role) << ',' << format_double(r.ade_m) << ','
        << format_double(r.fde_m) << ',' << r.n_windows << '\n';
  }
}

PerDomainReport read_report_csv(std::istream& in) {
  PerDomainReport report;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    text::strip_cr(line);
    const auto body = text::trim(line);
    if (body.empty()) continue;
    if (body.front() == '#') {
      const auto kv = text::trim(body.substr(1));
      const auto eq = kv.find('=');
      if (eq != std::string_view::npos) {
        report.provenance[std::string(text::trim(kv.substr(0, eq)))] =
            std::string(text::trim(kv.substr(eq + 1)));
      }
      continue;
    }
    const std::string where = "report line " + std::to_string(line_no);
    if (!header) {
      if (body != "domain,role,ade_m,fde_m,n_windows") {
        throw ParseError(where + ": expected header domain,role,ade_m,fde_m,n_windows");
      }
      header = true;
      continue;
    }
    const auto cols = text::split(body, ',');
    if (cols.size() != 5) throw ParseError(where + ": expected 5 columns");
    ReportRow r;
    r.domain = data::parse_domain_id(std::string(cols[0]));
    r.role = parse_role(std::string(cols[1]));
    std::int64_t n = 0;
    if (!text::parse_double(cols[2], r.ade_m) || !text::parse_double(cols[3], r.fde_m) ||
        !text::parse_int(cols[4], n) || n < 0) {
      throw ParseError(where + ": bad number");
    }
    r.n_windows = static_cast<std::size_t>(n);
    report.rows.push_back(r);
  }
  if (!header) throw ParseError("report: missing header");
  return report;
}

std::string render_report_table(const PerDomainReport& report) {
  std::size_t width = 6;
  for (const auto& r : report.rows) width = std::max(width, r.domain.str().size());
  std::ostringstream out;
  out << pad("Domain", width + 2) << pad("Role", 8) << pad("ADE (m)", 10) << pad("FDE (m)", 10)
      << "Windows\n";
  for (const auto& r : report.rows) {
    out << pad(r.domain.str(), width + 2) << pad(to_string(r.role), 8)
        << pad(fixed(r.ade_m, 2), 10) << pad(fixed(r.fde_m, 2), 10) << r.n_windows << '\n';
  }
  return out.str();
}

double increment(double model_value, double baseline_value) {
  if (baseline_value == 0.0) {
    if (model_value == 0.0) return 0.0;
    throw NumericError("increment: zero baseline with nonzero model value");
  }
  return (baseline_value - model_value) / baseline_value;
}

Comparison compare_reports(const PerDomainReport& a, const PerDomainReport& b,
                           std::string label_a, std::string label_b) {
  std::set<std::pair<data::DomainId, Role>> keys_a, keys_b;
  for (const auto& r : a.rows) keys_a.insert({r.domain, r.role});
  for (const auto& r : b.rows) keys_b.insert({r.domain, r.role});
  if (keys_a.size() != a.rows.size() || keys_b.size() != b.rows.size()) {
    throw DataError("report lists a domain twice");
  }
  if (keys_a != keys_b) {
    std::string missing;
    for (const auto& k : keys_a) {
      if (!keys_b.count(k)) missing += " " + k.first.str() + "(" + to_string(k.second) + ")";
    }
    for (const auto& k : keys_b) {
      if (!keys_a.count(k)) missing += " " + k.first.str() + "(" + to_string(k.second) + ")";
    }
    throw DataError("reports cover different domains:" + missing);
  }
  Comparison c;
  c.label_a = std::move(label_a);
  c.label_b = std::move(label_b);
  std::map<Role, std::size_t> counts;
  for (const auto& ra : a.rows) {
    const auto& rb = *std::find_if(b.rows.begin(), b.rows.end(), [&](const ReportRow& r) {
      return r.domain == ra.domain && r.role == ra.role;
    });
    ComparisonRow row;
    row.domain = ra.domain;
    row.role = ra.role;
    row.ade_a = ra.ade_m;
    row.fde_a = ra.fde_m;
    row.ade_b = rb.ade_m;
    row.fde_b = rb.fde_m;
    row.ade_increment = increment(ra.ade_m, rb.ade_m);
    row.fde_increment = increment(ra.fde_m, rb.fde_m);
    c.mean_ade_increment[row.role] += row.ade_increment;
    c.mean_fde_increment[row.role] += row.fde_increment;
    ++counts[row.role];
    c.rows.push_back(row);
  }
  for (auto& [role, v] : c.mean_ade_increment) v /= static_cast<double>(counts[role]);
  for (auto& [role, v] : c.mean_fde_increment) v /= static_cast<double>(counts[role]);
  return c;
}

std::string render_comparison(const Comparison& c) {
  std::size_t width = 6;
  for (const auto& r : c.rows) width = std::max(width, r.domain.str().size());
  const std::size_t la = std::max<std::size_t>(c.label_a.size() + 6, 12);
  const std::size_t lb = std::max<std::size_t>(c.label_b.size() + 6, 12);
  std::ostringstream out;
  out << pad("Domain", width + 2) << pad("Role", 8) << pad(c.label_a + " ADE", la)
      << pad(c.label_a + " FDE", la) << pad(c.label_b + " ADE", lb) << pad(c.label_b + " FDE", lb)
      << pad("ADE incr", 10) << "FDE incr\n";
  for (const auto& r : c.rows) {
    out << pad(r.domain.str(), width + 2) << pad(to_string(r.role), 8)
        << pad(fixed(r.ade_a, 2), la) << pad(fixed(r.fde_a, 2), la) << pad(fixed(r.ade_b, 2), lb)
        << pad(fixed(r.fde_b, 2), lb) << pad(percent(r.ade_increment), 10)
        << percent(r.fde_increment) << '\n';
  }
  for (const auto& [role, v] : c.mean_ade_increment) {
    out << "average increment (" << to_string(role) << "): ADE " << percent(v) << ", FDE "
        << percent(c.mean_fde_increment.at(role)) << '\n';
  }
  return out.str();
}

void write_comparison_csv(std::ostream& out, const Comparison& c) {
  out << "domain,role," << c.label_a << "_ade_m," << c.label_a << "_fde_m," << c.label_b
      << "_ade_m," << c.label_b << "_fde_m,ade_increment,fde_increment\n";
  for (const auto& r : c.rows) {
    out << r.domain.str() << ',' << to_string(r.role) << ',' << format_double(r.ade_a) << ','
        << format_double(r.fde_a) << ',' << format_double(r.ade_b) << ','
        << format_double(r.fde_b) << ',' << format_double(r.ade_increment) << ','
        << format_double(r.fde_increment) << '\n';
  }
}

PlotData make_plot_data(const data::SceneWindow& window, std::span<const double> prediction) {
  if (prediction.size() != window.ego_future.size() * 2) {
    throw ArgumentError("plot: prediction has " + std::to_string(prediction.size() / 2) +
                        " points, window future has " +
                        std::to_string(window.ego_future.size()));
  }
  PlotData p;
  p.scene_id = window.scene_id;
  p.ego_id = window.ego_id;
  p.domain = window.domain;
  p.history = window.ego_obs;
  p.future = window.ego_future;
  for (std::size_t t = 0; t < window.ego_future.size(); ++t) {
    p.prediction.push_back({window.ego_future[t].frame, prediction[2 * t], prediction[2 * t + 1]});
  }
  for (const auto& slot : window.neighbors) {
    if (slot.valid) p.neighbors.push_back({slot.agent_id, slot.points});
  }
  return p;
}

void write_plot_data(std::ostream& out, const PlotData& p) {
  out << "# cilf trajectory plot\n";
  out << "format = cilf-plot-1\n";
  out << "scene_id = " << p.scene_id << '\n';
  out << "ego_id = " << p.ego_id << '\n';
  out << "domain = " << p.domain.str() << '\n';
  for (const auto& [k, v] : p.metadata) out << "meta." << k << " = " << v << '\n';
  out << "[history]\n";
  write_points(out, p.history);
  out << "[future]\n";
  write_points(out, p.future);
  out << "[prediction]\n";
  write_points(out, p.prediction);
  for (const auto& n : p.neighbors) {
    out << "[neighbor " << n.agent_id << "]\n";
    write_points(out, n.points);
  }
}

PlotData parse_plot_data(std::istream& in) {
  PlotData p;
  std::string line;
  std::size_t line_no = 0;
  std::vector<data::TrackPoint>* section = nullptr;
  bool seen_format = false, seen_history = false, seen_future = false, seen_prediction = false;
  while (std::getline(in, line)) {
    ++line_no;
    text::strip_cr(line);
    const auto body = text::trim(line);
    const std::string where = "plot line " + std::to_string(line_no);
    if (body.empty() || body.front() == '#') continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ParseError(where + ": unterminated section");
      const std::string name(body.substr(1, body.size() - 2));
      if (name == "history" && !seen_history) {
        section = &p.history;
        seen_history = true;
      } else if (name == "future" && !seen_future) {
        section = &p.future;
        seen_future = true;
      } else if (name == "prediction" && !seen_prediction) {
        section = &p.prediction;
        seen_prediction = true;
      } else if (name.rfind("neighbor ", 0) == 0 && name.size() > 9) {
        p.neighbors.push_back({name.substr(9), {}});
        section = &p.neighbors.back().points;
      } else {
        throw ParseError(where + ": unexpected section [" + name + "]");
      }
      continue;
    }
    if (section == nullptr) {
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
      const std::string key(text::trim(body.substr(0, eq)));
      const std::string value(text::trim(body.substr(eq + 1)));
      if (key == "format") {
        if (value != "cilf-plot-1") throw ParseError(where + ": unsupported format " + value);
        seen_format = true;
      } else if (key == "scene_id") {
        p.scene_id = value;
      } else if (key == "ego_id") {
        p.ego_id = value;
      } else if (key == "domain") {
        p.domain = data::parse_domain_id(value);
      } else if (key.rfind("meta.", 0) == 0) {
        p.metadata[key.substr(5)] = value;
      } else {
        throw ParseError(where + ": unknown key " + key);
      }
      continue;
    }
    const auto cols = text::split(body, ',');
    data::TrackPoint pt;
    if (cols.size() != 3 || !text::parse_int(cols[0], pt.frame) ||
        !text::parse_double(cols[1], pt.x) || !text::parse_double(cols[2], pt.y)) {
      throw ParseError(where + ": expected frame,x,y");
    }
    section->push_back(pt);
  }
  if (!seen_format || !seen_history || !seen_future || !seen_prediction) {
    throw ParseError("plot: missing format line or required section");
  }
  return p;
}

void emit_plot_data(const data::SceneWindow& window, std::span<const double> prediction,
                    const std::filesystem::path& path,
                    const std::map<std::string, std::string>& metadata) {
  PlotData p = make_plot_data(window, prediction);
  p.metadata = metadata;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_plot_data(out, p);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace cilf::eval
