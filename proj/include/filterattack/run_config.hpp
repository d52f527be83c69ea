#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "filterattack/detector.hpp"
#include "filterattack/evolve.hpp"

namespace filterattack {

// Line-oriented key=value run configuration. Blank lines and lines starting
// with '#' are ignored; unknown keys are errors.
//
//   seed, population, epochs, chain_length, mutation_prob, batch_size, inner,
//   threshold, weights, fixture_weights, train_size, threads,
//   inner_population, inner_generations, inner_mutation_prob,
//   es_lambda, es_sigma, es_eta,
//   bit_depth, median_window, nlm_search, nlm_patch, nlm_strength, nlm_sigma
struct RunConfig {
  OuterConfig outer;
  SqueezerConfig squeezers;
  double threshold = kDefaultDetectionThreshold;
  std::size_t train_size = 200;
  std::optional<std::string> weights;
  std::optional<std::uint64_t> fixture_weights;

  // Every key with its effective value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace filterattack
