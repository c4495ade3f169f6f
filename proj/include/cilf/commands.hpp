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


#ifndef CILF_COMMANDS_HPP_
#define CILF_COMMANDS_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cilf/data.hpp"
#include "cilf/eval.hpp"
#include "cilf/run_config.hpp"

namespace cilf::cli {

// Reads <root>/<dataset>/<subset>.csv with optional <subset>.context.csv
// sidecars, in sorted path order.
std::vector<data::Scene> load_dataset(const std::filesystem::path& root);

void cmd_ingest(const RunConfig& config, std::ostream& log);
void cmd_synth(const RunConfig& config, std::ostream& log);
void cmd_train(const RunConfig& config, std::ostream& log);
eval::PerDomainReport cmd_eval(const RunConfig& config, std::ostream& log);
// The first report is the model under test; each further one is a baseline.
std::vector<eval::Comparison> cmd_report(const std::vector<std::filesystem::path>& reports,
                                         const std::vector<std::string>& labels,
                                         const std::filesystem::path& out_dir,
                                         std::ostream& log);
void cmd_plot(const RunConfig& config, std::ostream& log);

}  // namespace cilf::cli

#endif  // CILF_COMMANDS_HPP_
