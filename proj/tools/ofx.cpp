/**
 * Copyright 2026 The ofx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <iostream>

#include "CLI11.hpp"
#include "ofx/cli.hpp"
#include "ofx/logging.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

const CLI::Validator kSizeValidator(
    [](std::string& s) -> std::string {
      try {
        ofx::parse_size(s);
        return {};
      } catch (const std::invalid_argument& e) {
        return e.what();
      }
    },
    "HxW", "size");

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ofx: off-axis iris augmentation and low-complexity FCN segmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> config;
  app.add_option("--seed", seed, "Global random seed");
  app.add_option("--jobs", jobs, "Worker threads for augment and eval")->check(CLI::PositiveNumber);
  app.add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);

  ofx::IngestArgs ingest;
  std::string ingest_size = "120x160";
  auto* c_ingest = app.add_subcommand("ingest", "Pair, resize and register source images and masks");
  c_ingest->add_option("--src", ingest.src, "Directory with images/ and masks/")->required()->check(CLI::ExistingDirectory);
  c_ingest->add_option("--out", ingest.out, "Output directory")->required();
  c_ingest->add_option("--size", ingest_size, "Target size HxW")->check(kSizeValidator);

  ofx::AugmentArgs augment;
  std::string augment_out;
  auto* c_augment = app.add_subcommand("augment", "Build the augmented dataset and print its composition");
  c_augment->add_option("--manifest", augment.manifest, "Source manifest")->required()->check(CLI::ExistingFile);
  c_augment->add_option("--out", augment_out, "Output directory (overrides config output_dir)");
  c_augment->add_flag("--visible-light", augment.visible_light, "Off-axis passes only");

  ofx::SplitArgs split;
  std::string split_out;
  std::vector<double> ratios;
  auto* c_split = app.add_subcommand("split", "Assign train/val/test by source group");
  c_split->add_option("--manifest", split.manifest, "Manifest to split")->required()->check(CLI::ExistingFile);
  c_split->add_option("--out", split_out, "Output manifest (default: in place)");
  c_split->add_option("--ratios", ratios, "train val test ratios")->expected(3)->delimiter(',');

  ofx::TrainArgs train;
  std::optional<std::string> from;
  auto add_train_options = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", train.manifest, "Split manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", train.out, "Output directory for checkpoint.bin and loss.csv")->required();
    cmd->add_option("--lr", train.lr, "Learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", train.max_epochs, "Maximum epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--patience", train.patience, "Epochs without improvement before stopping")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--max-steps", train.max_steps, "Cap on optimizer steps (0 = none)");
  };
  auto* c_train = app.add_subcommand("train", "Train the network from scratch (lr 1e-4)");
  add_train_options(c_train);
  c_train->add_option("--from", from, "Initial checkpoint")->check(CLI::ExistingFile);
  auto* c_finetune = app.add_subcommand("finetune", "Continue training from a checkpoint (lr 5e-5)");
  add_train_options(c_finetune);
  c_finetune->add_option("--from", from, "Checkpoint to start from")->required()->check(CLI::ExistingFile);

  ofx::EvalArgs eval;
  std::string mode = "nir";
  std::optional<std::string> eval_out;
  auto* c_eval = app.add_subcommand("eval", "Score a checkpoint on a manifest split");
  c_eval->add_option("--manifest", eval.manifest, "Split manifest")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--checkpoint", eval.checkpoint, "Network checkpoint")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--mode", mode, "nir (threshold 0.55) or visible (0.4)")->check(CLI::IsMember({"nir", "visible"}));
  c_eval->add_option("--threshold", eval.threshold, "Override the mode threshold")->check(CLI::Range(0.0, 1.0));
  c_eval->add_option("--split", eval.split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  c_eval->add_option("--out", eval_out, "Write the JSON report here");

  std::string input = "120x160";
  auto* c_complexity = app.add_subcommand("complexity", "Parameter, storage and MAC counts");
  c_complexity->add_option("--input", input, "Input size HxW")->check(kSizeValidator);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  std::shared_ptr<ofx::CountingSink> counter;
  try {
    counter = ofx::configure_logging();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }

  std::size_t warnings = 0;
  try {
    if (*c_ingest) {
      std::tie(ingest.height, ingest.width) = ofx::parse_size(ingest_size);
      warnings += ofx::cmd_ingest(ingest, std::cout);
    } else if (*c_augment) {
      augment.config = config ? std::optional<ofx::fs::path>(*config) : std::nullopt;
      if (!augment_out.empty()) augment.out = augment_out;
      augment.seed = seed;
      augment.jobs = jobs;
      warnings += ofx::cmd_augment(augment, std::cout);
    } else if (*c_split) {
      if (!split_out.empty()) split.out = split_out;
      if (config) split.seed = ofx::read_json_file(*config).value("seed", split.seed);
      if (seed) split.seed = *seed;
      if (!ratios.empty()) split.ratios = {ratios[0], ratios[1], ratios[2]};
      warnings += ofx::cmd_split(split, std::cout);
    } else if (*c_train || *c_finetune) {
      train.finetune = static_cast<bool>(*c_finetune);
      if (from) train.from = *from;
      if (config) train.config = *config;
      train.seed = seed;
      warnings += ofx::cmd_train(train, std::cout);
    } else if (*c_eval) {
      eval.mode = ofx::mode_from_string(mode);
      if (eval_out) eval.out = *eval_out;
      if (config) {
        const auto j = ofx::read_json_file(*config);
        if (j.contains("eval")) {
          const auto& e = j.at("eval");
          if (c_eval->count("--mode") == 0 && e.contains("mode")) eval.mode = ofx::mode_from_string(e.at("mode"));
          if (!eval.threshold && e.contains("threshold")) eval.threshold = e.at("threshold").get<double>();
        }
      }
      eval.jobs = jobs.value_or(1);
      ofx::cmd_eval(eval, std::cout);
    } else if (*c_complexity) {
      ofx::cmd_complexity(input, std::cout);
    }
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeError;
  }
  spdlog::info("done with {} warning(s)", std::max(warnings, counter->warnings()));
  return 0;
}
