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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cilf/commands.hpp"
#include "cilf/error.hpp"
#include "cilf/run_config.hpp"

namespace {

struct CommonFlags {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.configs, "config file; repeat to layer overrides")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "overrides run.seed");
  cmd->add_option("--out", flags.out, "overrides run.out");
}

cilf::cli::RunConfig resolve(const CommonFlags& flags,
                             const std::optional<std::string>& checkpoint = std::nullopt) {
  std::vector<std::filesystem::path> files(flags.configs.begin(), flags.configs.end());
  std::optional<std::filesystem::path> out;
  if (flags.out) out = *flags.out;
  auto config = cilf::cli::resolve_run_config(files, flags.seed, out);
  if (checkpoint) {
    config.resolved["eval"]["checkpoint"] = *checkpoint;
    config = cilf::cli::run_config_from(config.resolved);
  }
  return config;
}

int fail(const std::string& kind, const std::string& message) {
  std::string one_line = message;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << kind << ": " << one_line << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal-inspired trajectory prediction pipeline"};
  app.require_subcommand(1);

  CommonFlags ingest_flags, synth_flags, train_flags, eval_flags, plot_flags;
  std::optional<std::string> eval_checkpoint, plot_checkpoint;
  std::vector<std::string> report_files, report_labels;
  std::string report_out = ".";

  auto* ingest = app.add_subcommand("ingest", "convert raw CSVs to canonical track files");
  add_common(ingest, ingest_flags);
  auto* synth = app.add_subcommand("synth", "generate a planted-causal synthetic dataset");
  add_common(synth, synth_flags);
  auto* train = app.add_subcommand("train", "train on the split's source domains");
  add_common(train, train_flags);
  auto* eval = app.add_subcommand("eval", "per-domain ADE/FDE report for a checkpoint");
  add_common(eval, eval_flags);
  eval->add_option("--checkpoint", eval_checkpoint, "overrides eval.checkpoint");
  auto* report = app.add_subcommand("report", "compare a model report against baselines");
  report->add_option("reports", report_files, "report.csv files, model first")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--labels", report_labels, "one label per report");
  report->add_option("--out", report_out, "output directory");
  auto* plot = app.add_subcommand("plot", "write trajectory plot files");
  add_common(plot, plot_flags);
  plot->add_option("--checkpoint", plot_checkpoint, "overrides eval.checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what());
  }

  try {
    if (*ingest) {
      cilf::cli::cmd_ingest(resolve(ingest_flags), std::cout);
    } else if (*synth) {
      cilf::cli::cmd_synth(resolve(synth_flags), std::cout);
    } else if (*train) {
      cilf::cli::cmd_train(resolve(train_flags), std::cout);
    } else if (*eval) {
      cilf::cli::cmd_eval(resolve(eval_flags, eval_checkpoint), std::cout);
    } else if (*report) {
      std::vector<std::filesystem::path> files(report_files.begin(), report_files.end());
      cilf::cli::cmd_report(files, report_labels, report_out, std::cout);
    } else if (*plot) {
      cilf::cli::cmd_plot(resolve(plot_flags, plot_checkpoint), std::cout);
    }
  } catch (const cilf::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io_error", e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}
