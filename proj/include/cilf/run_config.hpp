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


#ifndef CILF_RUN_CONFIG_HPP_
#define CILF_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cilf/data.hpp"
#include "cilf/synthetic.hpp"
#include "cilf/train.hpp"

namespace cilf::cli {

// section -> key -> value
using Sections = std::map<std::string, std::map<std::string, std::string>>;

// Defaults compiled in from configs/defaults.ini.
const std::string& default_config_text();

// INI text; '#' and ';' start comment lines.
Sections parse_ini(const std::string& text, const std::string& origin);
Sections read_ini_file(const std::filesystem::path& path);

// Overlays `layer` onto `base`. Keys absent from `base` are rejected so a
// typo cannot silently fall back to a default.
void overlay(Sections& base, const Sections& layer, const std::string& origin);

struct RunConfig {
  Sections resolved;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::filesystem::path data_root;
  data::SplitKind split = data::SplitKind::holdout_last;
  data::WindowOptions window;
  synthetic::SyntheticSpec synth;
  train::TrainConfig train;
  std::filesystem::path resume;
  std::filesystem::path checkpoint;
  bool per_window_sum_ade = false;
  std::size_t plot_count = 5;
  std::filesystem::path adapter;
  std::filesystem::path ingest_input;

  // Flat "section.key" view of `resolved`, embedded in every artifact.
  std::map<std::string, std::string> provenance() const;
};

// defaults, then each file in order, then the explicit seed/out overrides.
RunConfig resolve_run_config(const std::vector<std::filesystem::path>& files,
                             std::optional<std::uint64_t> seed = std::nullopt,
                             std::optional<std::filesystem::path> out = std::nullopt);
RunConfig run_config_from(const Sections& resolved);

}  // namespace cilf::cli

#endif  // CILF_RUN_CONFIG_HPP_
