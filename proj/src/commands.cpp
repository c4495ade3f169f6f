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

#include "cilf/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "cilf/checkpoint.hpp"
#include "cilf/error.hpp"
#include "cilf/synthetic.hpp"
#include "cilf/train.hpp"

namespace cilf::cli {
namespace {

namespace fs = std::filesystem;

bool is_context_file(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.size() > 12 && name.compare(name.size() - 12, 12, ".context.csv") == 0;
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<data::DomainId> domains_of(const std::vector<data::SceneWindow>& windows) {
  std::vector<data::DomainId> out;
  for (const auto& w : windows) out.push_back(w.domain);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void print_window_counts(const std::vector<data::SceneWindow>& windows, std::ostream& log) {
  for (const auto& d : domains_of(windows)) {
    const auto n = std::count_if(windows.begin(), windows.end(),
                                 [&](const data::SceneWindow& w) { return w.domain == d; });
    log << "domain " << d.str() << ": " << n << " windows\n";
  }
}

std::vector<data::SceneWindow> load_windows(const RunConfig& config) {
  if (config.data_root.empty()) throw ConfigError("data.root: not set");
  const auto scenes = load_dataset(config.data_root);
  return data::window_scenes(scenes, config.window);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

bool metadata_flag(const checkpoint::Container& c, const std::string& key) {
  auto it = c.metadata.find(key);
  return it != c.metadata.end() && it->second == "true";
}

struct LoadedModel {
  model::Network net;
  model::ModelParams params;
  bool rotate = false;
};

LoadedModel load_model(const RunConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("eval.checkpoint: not set");
  if (!fs::exists(config.checkpoint)) {
    throw IoError("checkpoint " + config.checkpoint.string() + " does not exist");
  }
  const auto container = checkpoint::load(config.checkpoint);
  auto [model_config, params] = checkpoint::get_model(container);
  return {model::Network(model_config), std::move(params),
          metadata_flag(container, "train.rotate")};
}

void check_windows_fit(const model::Network& net, const std::vector<data::SceneWindow>& windows) {
  for (const auto& w : windows) {
    try {
      net.check_window(w);
    } catch (const ArgumentError& e) {
      throw DataError("data does not match the checkpoint's model (" + w.domain.str() + " " +
                      w.scene_id + "/" + w.ego_id + "): " + e.what());
    }
  }
}

}  // namespace

std::vector<data::Scene> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("data root " + root.string() + " is not a directory");
  std::vector<data::Scene> scenes;
  std::size_t files = 0;
  for (const auto& dataset_dir : sorted_entries(root)) {
    if (!fs::is_directory(dataset_dir)) continue;
    for (const auto& file : sorted_entries(dataset_dir)) {
      if (file.extension() != ".csv" || is_context_file(file)) continue;
      const data::DomainId domain{dataset_dir.filename().string(), file.stem().string()};
      std::ifstream in(file, std::ios::binary);
      if (!in) throw IoError("cannot read " + file.string());
      auto part = data::parse_canonical_csv(in, domain);
      const fs::path context = dataset_dir / (file.stem().string() + ".context.csv");
      if (fs::exists(context)) {
        std::ifstream cin(context, std::ios::binary);
        if (!cin) throw IoError("cannot read " + context.string());
        data::attach_contexts(part, data::parse_context_csv(cin));
      }
      scenes.insert(scenes.end(), std::make_move_iterator(part.begin()),
                    std::make_move_iterator(part.end()));
      ++files;
    }
  }
  if (files == 0) throw DataError("no <dataset>/<subset>.csv files under " + root.string());
  return scenes;
}

void cmd_ingest(const RunConfig& config, std::ostream& log) {
  if (config.adapter.empty()) throw ConfigError("ingest.adapter: not set");
  if (config.ingest_input.empty()) throw ConfigError("ingest.input: not set");
  std::ifstream adapter_in(config.adapter, std::ios::binary);
  if (!adapter_in) throw IoError("cannot read adapter config " + config.adapter.string());
  const auto adapter = data::parse_adapter_config(adapter_in);
  if (!fs::is_directory(config.ingest_input)) {
    throw IoError("ingest input " + config.ingest_input.string() + " is not a directory");
  }
  std::vector<fs::path> inputs;
  for (const auto& p : sorted_entries(config.ingest_input)) {
    if (fs::is_regular_file(p) && p.extension() == ".csv") inputs.push_back(p);
  }
  if (inputs.empty()) {
    throw DataError("no .csv files in " + config.ingest_input.string());
  }
  const fs::path dir = config.out_dir / adapter.dataset;
  fs::create_directories(dir);
  std::vector<data::SceneWindow> windows;
  for (const auto& p : inputs) {
    const data::DomainId domain{adapter.dataset, p.stem().string()};
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    const auto scenes = data::adapt_csv(in, adapter, domain);
    const fs::path target = dir / (domain.subset + ".csv");
    auto out = open_out(target);
    data::write_canonical_csv(out, scenes);
    finish(out, target);
    auto w = data::window_scenes(scenes, config.window);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  const fs::path manifest = config.out_dir / "ingest_manifest.txt";
  auto m = open_out(manifest);
  for (const auto& [k, v] : config.provenance()) m << "# " << k << " = " << v << '\n';
  for (const auto& p : inputs) m << "input = " << p.filename().string() << '\n';
  finish(m, manifest);
  print_window_counts(windows, log);
}

void cmd_synth(const RunConfig& config, std::ostream& log) {
  const auto dataset = synthetic::generate_synthetic_domains(config.synth);
  const auto files = synthetic::write_dataset(dataset, config.out_dir, config.provenance());
  std::vector<data::SceneWindow> windows;
  for (const auto& scenes : dataset.domains) {
    auto w = data::window_scenes(scenes, config.window);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  log << "wrote " << files.size() << " domains to " << config.out_dir.string() << '\n';
  print_window_counts(windows, log);
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  if (!config.resume.empty() && !fs::exists(config.resume)) {
    throw IoError("train.resume " + config.resume.string() + " does not exist");
  }
  const auto windows = load_windows(config);
  const auto domains = domains_of(windows);
  const auto plan = data::make_split_plan(config.split, domains);
  const auto outputs =
      train::train(windows, plan, config.train, config.out_dir, config.provenance(), config.resume);
  log << "trained " << outputs.steps << " steps on";
  for (const auto& d : plan.sources) log << ' ' << d.str();
  log << "\ncheckpoint " << outputs.checkpoint.string() << "\nlog " << outputs.log.string()
      << '\n';
}

eval::PerDomainReport cmd_eval(const RunConfig& config, std::ostream& log) {
  auto loaded = load_model(config);
  const auto windows = load_windows(config);
  check_windows_fit(loaded.net, windows);
  const auto plan = data::make_split_plan(config.split, domains_of(windows));
  eval::EvalOptions options;
  options.rotate = loaded.rotate;
  options.per_window_sum_ade = config.per_window_sum_ade;
  options.exec = config.train.exec;
  auto report = eval::evaluate(loaded.net, loaded.params, windows, plan, options);
  report.provenance = config.provenance();
  fs::create_directories(config.out_dir);
  const fs::path csv = config.out_dir / "report.csv";
  auto out = open_out(csv);
  eval::write_report_csv(out, report);
  finish(out, csv);
  const std::string table = eval::render_report_table(report);
  const fs::path txt = config.out_dir / "report.txt";
  auto t = open_out(txt);
  t << table;
  finish(t, txt);
  log << table;
  return report;
}

std::vector<eval::Comparison> cmd_report(const std::vector<fs::path>& reports,
                                         const std::vector<std::string>& labels,
                                         const fs::path& out_dir, std::ostream& log) {
  if (reports.size() < 2) throw ArgumentError("report: need at least two report files");
  if (!labels.empty() && labels.size() != reports.size()) {
    throw ArgumentError("report: need one label per report file");
  }
  std::vector<eval::PerDomainReport> parsed;
  for (const auto& p : reports) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read report " + p.string());
    parsed.push_back(eval::read_report_csv(in));
  }
  auto label = [&](std::size_t i) {
    if (!labels.empty()) return labels[i];
    return i == 0 ? std::string("cilf") : (reports.size() == 2 ? std::string("vanilla")
                                                                : "baseline" + std::to_string(i));
  };
  fs::create_directories(out_dir);
  std::vector<eval::Comparison> out;
  for (std::size_t i = 1; i < parsed.size(); ++i) {
    auto c = eval::compare_reports(parsed[0], parsed[i], label(0), label(i));
    const std::string stem = "comparison_" + c.label_a + "_vs_" + c.label_b;
    const fs::path csv = out_dir / (stem + ".csv");
    auto f = open_out(csv);
    f << "# model = " << reports[0].string() << '\n';
    f << "# baseline = " << reports[i].string() << '\n';
    eval::write_comparison_csv(f, c);
    finish(f, csv);
    const std::string table = eval::render_comparison(c);
    const fs::path txt = out_dir / (stem + ".txt");
    auto t = open_out(txt);
    t << table;
    finish(t, txt);
    log << table;
    out.push_back(std::move(c));
  }
  return out;
}

void cmd_plot(const RunConfig& config, std::ostream& log) {
  auto loaded = load_model(config);
  const auto windows = load_windows(config);
  check_windows_fit(loaded.net, windows);
  const auto plan = data::make_split_plan(config.split, domains_of(windows));
  const auto& domains = plan.targets.empty() ? plan.sources : plan.targets;
  const fs::path dir = config.out_dir / "plots";
  fs::create_directories(dir);
  auto meta = config.provenance();
  std::size_t written = 0;
  for (const auto& d : domains) {
    std::vector<data::SceneWindow> chosen;
    for (const auto& w : windows) {
      if (w.domain == d && chosen.size() < config.plot_count) chosen.push_back(w);
    }
    if (chosen.empty()) continue;
    const auto preds =
        eval::predict(loaded.net, loaded.params, chosen, loaded.rotate, config.train.exec);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const auto& w = chosen[i];
      const fs::path path =
          dir / (d.dataset + "_" + d.subset + "_" + w.scene_id + "_" + w.ego_id + ".plot");
      const std::size_t per = data::kPredLen * 2;
      eval::emit_plot_data(w, std::span<const double>(preds).subspan(i * per, per), path, meta);
      ++written;
    }
  }
  log << "wrote " << written << " plot files to " << dir.string() << '\n';
}

}  // namespace cilf::cli
