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

#include "cilf/run_config.hpp"

#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cilf/error.hpp"
#include "kv_util.hpp"
#include "text_util.hpp"

namespace cilf::cli {
namespace {

const std::map<std::string, std::string>& section(const Sections& s, const std::string& name) {
  static const std::map<std::string, std::string> empty;
  auto it = s.find(name);
  return it == s.end() ? empty : it->second;
}

kernels::Exec parse_exec(const std::string& v) {
  if (v == "serial") return kernels::Exec::serial;
  if (v == "parallel") return kernels::Exec::parallel;
  throw ConfigError("train.exec: expected serial or parallel, got '" + v + "'");
}

losses::IrmMode parse_irm_mode(const std::string& v) {
  if (v == "dummy_scalar") return losses::IrmMode::dummy_scalar;
  if (v == "full_decoder") return losses::IrmMode::full_decoder;
  throw ConfigError("train.irm_mode: expected dummy_scalar or full_decoder, got '" + v + "'");
}

train::TrainConfig train_config_from(const Sections& s, std::uint64_t seed) {
  const auto& t = section(s, "train");
  const std::string sec = "train";
  train::TrainConfig c;
  c.model = model::model_config_from(section(s, "model"));
  auto& h = c.hyper;
  h.lambda = kv::get_double(t, sec, "lambda", h.lambda);
  h.alpha = kv::get_double(t, sec, "alpha", h.alpha);
  h.tau_contrast = kv::get_double(t, sec, "tau_contrast", h.tau_contrast);
  h.mask_update_period = kv::get_size(t, sec, "mask_update_period", h.mask_update_period);
  h.lr_backbone = kv::get_double(t, sec, "lr_backbone", h.lr_backbone);
  h.lr_v = kv::get_double(t, sec, "lr_v", h.lr_v);
  h.lr_mask = kv::get_double(t, sec, "lr_mask", h.lr_mask);
  h.irm_mode = parse_irm_mode(kv::get_string(t, "irm_mode", "dummy_scalar"));
  h.literal_v_objective = kv::get_bool(t, sec, "literal_v_objective", h.literal_v_objective);
  h.update_backbone = kv::get_bool(t, sec, "update_backbone", h.update_backbone);
  h.update_v = kv::get_bool(t, sec, "update_v", h.update_v);
  h.update_mask = kv::get_bool(t, sec, "update_mask", h.update_mask);
  c.batch_size = kv::get_size(t, sec, "batch_size", c.batch_size);
  c.epochs = kv::get_size(t, sec, "epochs", c.epochs);
  c.checkpoint_period = kv::get_u64(t, sec, "checkpoint_period", c.checkpoint_period);
  c.schedule.initial = kv::get_double(t, sec, "tau_initial", c.schedule.initial);
  c.schedule.final_value = kv::get_double(t, sec, "tau_final", c.schedule.final_value);
  c.schedule.decay_steps = kv::get_u64(t, sec, "tau_decay_steps", c.schedule.decay_steps);
  c.rotate = kv::get_bool(t, sec, "rotate", c.rotate);
  c.exec = parse_exec(kv::get_string(t, "exec", "parallel"));
  c.seed = seed;
  c.validate();
  return c;
}

}  // namespace

const std::string& default_config_text() {
  static const std::string text =
#include "defaults.inc"
      ;
  return text;
}

Sections parse_ini(const std::string& text, const std::string& origin) {
  // Boost's INI reader only knows ';' comments.
  std::istringstream raw(text);
  std::ostringstream cleaned;
  std::string line;
  while (std::getline(raw, line)) {
    text::strip_cr(line);
    const auto body = text::trim(line);
    if (!body.empty() && body.front() == '#') {
      cleaned << '\n';
      continue;
    }
    cleaned << line << '\n';
  }
  boost::property_tree::ptree tree;
  std::istringstream in(cleaned.str());
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  Sections out;
  for (const auto& [name, sec] : tree) {
    if (sec.empty() && !sec.data().empty()) {
      throw ConfigError(origin + ": key '" + name + "' outside a section");
    }
    auto& dst = out[name];
    for (const auto& [key, value] : sec) dst[key] = value.get_value<std::string>();
  }
  return out;
}

Sections read_ini_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str(), path.string());
}

void overlay(Sections& base, const Sections& layer, const std::string& origin) {
  for (const auto& [name, sec] : layer) {
    auto it = base.find(name);
    if (it == base.end()) throw ConfigError(origin + ": unknown section [" + name + "]");
    for (const auto& [key, value] : sec) {
      if (!it->second.count(key)) {
        throw ConfigError(origin + ": unknown key " + name + "." + key);
      }
      it->second[key] = value;
    }
  }
}

std::map<std::string, std::string> RunConfig::provenance() const {
  std::map<std::string, std::string> out;
  for (const auto& [name, sec] : resolved) {
    for (const auto& [key, value] : sec) out[name + "." + key] = value;
  }
  return out;
}

RunConfig resolve_run_config(const std::vector<std::filesystem::path>& files,
                             std::optional<std::uint64_t> seed,
                             std::optional<std::filesystem::path> out) {
  Sections s = parse_ini(default_config_text(), "defaults");
  for (const auto& f : files) overlay(s, read_ini_file(f), f.string());
  if (seed) s["run"]["seed"] = std::to_string(*seed);
  if (out) s["run"]["out"] = out->string();
  return run_config_from(s);
}

RunConfig run_config_from(const Sections& s) {
  RunConfig c;
  c.resolved = s;
  const auto& run = section(s, "run");
  c.seed = kv::get_u64(run, "run", "seed", 0);
  c.out_dir = kv::get_string(run, "out", "out");
  if (c.out_dir.empty()) throw ConfigError("run.out: must not be empty");
  c.split = data::parse_split_kind(kv::get_string(run, "split", "holdout_last"));

  const auto& d = section(s, "data");
  c.data_root = kv::get_string(d, "root", "");
  c.window.stride = kv::get_size(d, "data", "stride", c.window.stride);
  c.window.neighbor_radius = kv::get_double(d, "data", "neighbor_radius", c.window.neighbor_radius);
  if (c.window.stride == 0) throw ConfigError("data.stride: must be >= 1");

  c.synth = synthetic::spec_from(section(s, "synth"));
  c.synth.seed = c.seed;

  c.train = train_config_from(s, c.seed);
  c.window.max_neighbors = c.train.model.max_neighbors;
  c.resume = kv::get_string(section(s, "train"), "resume", "");

  const auto& e = section(s, "eval");
  c.checkpoint = kv::get_string(e, "checkpoint", "");
  c.per_window_sum_ade = kv::get_bool(e, "eval", "per_window_sum_ade", false);
  c.plot_count = kv::get_size(e, "eval", "plot_count", c.plot_count);

  const auto& in = section(s, "ingest");
  c.adapter = kv::get_string(in, "adapter", "");
  c.ingest_input = kv::get_string(in, "input", "");
  return c;
}

}  // namespace cilf::cli
