#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "filterattack/classifier.hpp"

namespace filterattack::cli {

// Process exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitFlagged = 3;

// Either a weights file or the seeded fixture generator.
struct ModelSource {
  std::optional<std::filesystem::path> weights;
  std::optional<std::uint64_t> fixture_seed;
};

// Throws ArgumentError when neither source is set.
CnnModel load_model(const ModelSource& source);

struct AttackOptions {
  std::filesystem::path config;
  std::filesystem::path dataset;
  ModelSource model;  // falls back to the config's weights / fixture_weights
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> threshold;
};

// Writes best_chain.txt, history.csv, summary.csv and manifest.json into
// out_dir. On failure every file it created is removed.
int cmd_attack(const AttackOptions& options, std::ostream& out, std::ostream& err);

struct ApplyOptions {
  std::filesystem::path chain;
  std::filesystem::path input;  // a .ppm image or a CIFAR-10 batch
  std::filesystem::path out_dir;
};

// A .ppm input yields <stem>_adv.ppm. A dataset yields <stem>_NNNNN.ppm (the
// re-exported original) and <stem>_NNNNN_adv.ppm per record.
int cmd_apply(const ApplyOptions& options, std::ostream& out, std::ostream& err);

struct EvaluateOptions {
  std::filesystem::path chain;
  std::filesystem::path dataset;
  ModelSource model;
  std::optional<std::filesystem::path> config;  // squeezers and threshold
  std::optional<double> threshold;
  std::optional<std::filesystem::path> csv_out;
  int threads = 1;
};

// Prints the EvalReport CSV (header + one row) on `out`.
int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err);

struct DetectOptions {
  std::filesystem::path image;
  ModelSource model;
  std::optional<double> threshold;
};

// Prints "score=<6 decimals> flagged=<true|false>". Exit 0 when legitimate,
// 3 when flagged.
int cmd_detect(const DetectOptions& options, std::ostream& out, std::ostream& err);

}  // namespace filterattack::cli
