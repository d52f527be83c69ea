#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "filterattack/commands.hpp"

namespace cli = filterattack::cli;

namespace {

void add_model_options(CLI::App* cmd, std::string& weights,
                       std::optional<std::uint64_t>& fixture) {
  auto* w = cmd->add_option("--weights", weights, "Weights file of the target network");
  auto* f = cmd->add_option("--fixture-weights", fixture,
                            "Use seeded pseudo-random fixture weights instead of a file");
  w->excludes(f);
}

void resolve_model(cli::ModelSource& model, const std::string& weights,
                   const std::optional<std::uint64_t>& fixture) {
  if (!weights.empty()) model.weights = weights;
  model.fixture_seed = fixture;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal filter-chain attacks against a CNN with a feature-squeezing detector"};
  app.require_subcommand(1);

  // attack
  cli::AttackOptions attack;
  std::string attack_weights;
  std::optional<std::uint64_t> attack_fixture;
  auto* attack_cmd = app.add_subcommand("attack", "Evolve a universal filter chain");
  attack_cmd->add_option("--config", attack.config, "Run configuration (key=value)")->required();
  attack_cmd->add_option("--dataset", attack.dataset, "CIFAR-10 binary batch")->required();
  attack_cmd->add_option("--out", attack.out_dir, "Output directory")->required();
  attack_cmd->add_option("--seed", attack.seed, "Override the configured seed");
  attack_cmd->add_option("--threads", attack.threads, "Per-image evaluation threads");
  attack_cmd->add_option("--threshold", attack.threshold, "Detector threshold");
  add_model_options(attack_cmd, attack_weights, attack_fixture);

  // apply
  cli::ApplyOptions apply;
  auto* apply_cmd = app.add_subcommand("apply", "Apply a saved chain to an image or dataset");
  apply_cmd->add_option("--chain", apply.chain, "Chain file")->required();
  apply_cmd->add_option("--input", apply.input, "PPM image or CIFAR-10 batch")->required();
  apply_cmd->add_option("--out", apply.out_dir, "Output directory")->required();

  // evaluate
  cli::EvaluateOptions evaluate;
  std::string eval_weights;
  std::optional<std::uint64_t> eval_fixture;
  std::string eval_config, eval_csv;
  auto* eval_cmd = app.add_subcommand("evaluate", "Report ASR, DR and FSDR of a chain");
  eval_cmd->add_option("--chain", evaluate.chain, "Chain file")->required();
  eval_cmd->add_option("--dataset", evaluate.dataset, "CIFAR-10 binary batch")->required();
  eval_cmd->add_option("--config", eval_config, "Run configuration for squeezers and threshold");
  eval_cmd->add_option("--threshold", evaluate.threshold, "Detector threshold");
  eval_cmd->add_option("--csv", eval_csv, "Also write the CSV report here");
  eval_cmd->add_option("--threads", evaluate.threads, "Per-image evaluation threads");
  add_model_options(eval_cmd, eval_weights, eval_fixture);

  // detect
  cli::DetectOptions detect;
  std::string detect_weights;
  std::optional<std::uint64_t> detect_fixture;
  auto* detect_cmd = app.add_subcommand("detect", "Run the feature-squeezing detector on one image");
  detect_cmd->add_option("--image", detect.image, "PPM image (32x32)")->required();
  detect_cmd->add_option("--threshold", detect.threshold, "Detector threshold");
  add_model_options(detect_cmd, detect_weights, detect_fixture);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  if (*attack_cmd) {
    resolve_model(attack.model, attack_weights, attack_fixture);
    return cli::cmd_attack(attack, std::cout, std::cerr);
  }
  if (*apply_cmd) return cli::cmd_apply(apply, std::cout, std::cerr);
  if (*eval_cmd) {
    resolve_model(evaluate.model, eval_weights, eval_fixture);
    if (!eval_config.empty()) evaluate.config = eval_config;
    if (!eval_csv.empty()) evaluate.csv_out = eval_csv;
    return cli::cmd_evaluate(evaluate, std::cout, std::cerr);
  }
  resolve_model(detect.model, detect_weights, detect_fixture);
  return cli::cmd_detect(detect, std::cout, std::cerr);
}
