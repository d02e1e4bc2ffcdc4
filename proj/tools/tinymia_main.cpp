// Copyright 2026 The tinymia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tinymia/common.hpp"
#include "tinymia/pipeline.hpp"

namespace {

struct StageEntry {
  const char* name;
  const char* description;
  tinymia::Stage stage;
};

constexpr StageEntry kStages[] = {
    {"prepare", "Tokenize the corpus, deduplicate, assign membership, compute stats",
     tinymia::Stage::kPrepare},
    {"farm-train", "Train one model per membership row (resumable)", tinymia::Stage::kFarmTrain},
    {"farm-score", "Evaluate every model on every example", tinymia::Stage::kFarmScore},
    {"attack", "Run the configured attacks against the target model", tinymia::Stage::kAttack},
    {"report", "ROC/AUC/TPR@FPR, per-example vulnerability, partitions",
     tinymia::Stage::kReport},
    {"extract", "Suffix extraction cost for the top-ranked candidates",
     tinymia::Stage::kExtract},
    {"all", "Run every stage in order", tinymia::Stage::kAll},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "tinymia: membership-inference auditing with farms of tiny language models.\n"
      "A single JSON configuration determines a run; artifacts land in a run\n"
      "directory keyed by the configuration hash (root: $TINYMIA_RUN_ROOT or ./runs)."};
  app.get_formatter()->column_width(26);

  std::string config_path;
  std::string run_dir;
  std::string stage_flag;
  uint32_t parallelism = 0;
  app.add_option("--config", config_path, "Run configuration JSON file")
      ->type_name("FILE");
  app.add_option("--run-dir", run_dir,
                 "Run directory override (default: keyed by config hash)")
      ->type_name("DIR");
  app.add_option("--parallelism", parallelism,
                 "Worker thread override for farm and vulnerability stages")
      ->type_name("N");
  app.add_option("--stage", stage_flag, "Stage to run (alternative to a subcommand)")
      ->type_name("NAME");

  std::optional<tinymia::Stage> chosen;
  // Subcommands pass unmatched options up so the global flags may appear
  // either before or after the stage name.
  for (const StageEntry& entry : kStages) {
    CLI::App* sub = app.add_subcommand(entry.name, entry.description);
    sub->fallthrough();
    const tinymia::Stage stage = entry.stage;
    sub->callback([&chosen, stage]() { chosen = stage; });
  }
  // `farm train` / `farm score` spellings.
  CLI::App* farm = app.add_subcommand("farm", "Farm stages (train, score)");
  farm->fallthrough();
  farm->require_subcommand(1);
  farm->add_subcommand("train", "Alias of farm-train")->fallthrough()->callback([&chosen]() {
    chosen = tinymia::Stage::kFarmTrain;
  });
  farm->add_subcommand("score", "Alias of farm-score")->fallthrough()->callback([&chosen]() {
    chosen = tinymia::Stage::kFarmScore;
  });
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? tinymia::kExitOk : tinymia::kExitConfig;
  }

  try {
    if (!chosen) {
      if (stage_flag.empty()) {
        throw tinymia::ConfigError(
            "no stage given; use a stage subcommand or --stage <name> (one of: prepare, "
            "farm-train, farm-score, attack, report, extract, all)");
      }
      chosen = tinymia::stage_from_name(stage_flag);
    } else if (!stage_flag.empty() &&
               tinymia::stage_from_name(stage_flag) != *chosen) {
      throw tinymia::ConfigError("--stage disagrees with the stage subcommand");
    }
    if (config_path.empty()) {
      throw tinymia::ConfigError("--config <file> is required");
    }
    tinymia::run_pipeline(config_path, run_dir, parallelism, *chosen, std::cout);
    return tinymia::kExitOk;
  } catch (const tinymia::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return tinymia::kExitConfig;
  } catch (const tinymia::PrereqError& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return tinymia::kExitPrereq;
  } catch (const tinymia::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return tinymia::kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tinymia::kExitFailure;
  }
}
