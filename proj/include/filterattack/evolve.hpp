#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "filterattack/classifier.hpp"
#include "filterattack/detector.hpp"
#include "filterattack/filters.hpp"
#include "filterattack/image.hpp"
#include "filterattack/moea.hpp"
#include "filterattack/random.hpp"

namespace filterattack {

enum class InnerKind { GA, ES, Tournament };

std::string_view inner_name(InnerKind kind);
// Accepts "GA", "ES", "Tournament" (case-insensitive).
InnerKind parse_inner_kind(std::string_view text);

struct InnerSettings {
  std::size_t population = 5;   // GA
  std::size_t generations = 3;  // GA generations, ES iterations, tournament rounds
  double mutation_prob = 0.5;   // GA per-parameter resampling probability
  std::size_t es_lambda = 5;
  double es_sigma_scale = 0.1;  // sigma = scale * parameter range
  double es_eta_scale = 0.5;    // eta = scale * sigma
};

struct OuterConfig {
  std::size_t population_size = 10;
  std::size_t epochs = 3;
  std::size_t chain_length = 5;
  double mutation_prob = 0.5;
  std::size_t batch_size = 100;
  InnerKind inner = InnerKind::ES;
  std::uint64_t seed = 0;
  InnerSettings inner_settings;
  int threads = 1;

  void validate() const;
};

struct Candidate {
  FilterChain chain;
  std::optional<ObjectiveVector> objectives;
  long eval_batch_id = -1;
};

// Maps a parameter assignment of a fixed kind sequence to its objectives.
using ChainEvaluator = std::function<ObjectiveVector(const FilterChain&)>;

// Objectives of one chain on one set of images, uncached: f1 = 1 - ASR and
// f2 = detection rate over every perturbed image.
ObjectiveVector evaluate_candidate(const FilterChain& chain, const LabeledDataset& batch,
                                   const FeatureSqueezeDetector& detector, int threads = 1);

// Cached evaluation on fixed image batches. Batch ids index the batches
// handed to the constructor; the cache key is (chain text, batch id).
class BatchEvaluator {
 public:
  BatchEvaluator(const FeatureSqueezeDetector& detector, std::vector<std::vector<Image>> batches,
                 int threads = 1);

  ObjectiveVector evaluate(const FilterChain& chain, std::size_t batch_id);
  std::size_t batch_count() const { return batches_.size(); }
  std::size_t cache_hits() const { return hits_; }
  std::size_t cache_size() const { return cache_.size(); }

 private:
  const std::vector<int>& original_labels(std::size_t batch_id);

  const FeatureSqueezeDetector& detector_;
  std::vector<std::vector<Image>> batches_;
  std::vector<std::optional<std::vector<int>>> labels_;
  std::map<std::pair<std::string, std::size_t>, ObjectiveVector> cache_;
  std::size_t hits_ = 0;
  int threads_;
};

// --- outer operators -------------------------------------------------------

std::vector<Candidate> init_population(const OuterConfig& cfg, Rng& rng);
FilterChain crossover(const FilterChain& p1, const FilterChain& p2, Rng& rng);
// Fixed cut point in [1, l-1]; exposed for tests.
FilterChain crossover_at(const FilterChain& p1, const FilterChain& p2, std::size_t cut, Rng& rng);
FilterChain mutate(const FilterChain& chain, double prob, Rng& rng);

// --- inner optimizers ------------------------------------------------------

FilterChain inner_optimize_ga(const FilterChain& chain, const ChainEvaluator& evaluate, Rng& rng,
                              const InnerSettings& settings = {});
FilterChain inner_optimize_es(const FilterChain& chain, const ChainEvaluator& evaluate, Rng& rng,
                              const InnerSettings& settings = {});
FilterChain inner_optimize_tournament(const FilterChain& chain, const ChainEvaluator& evaluate,
                                      Rng& rng, const InnerSettings& settings = {});
FilterChain inner_optimize(InnerKind kind, const FilterChain& chain, const ChainEvaluator& evaluate,
                           Rng& rng, const InnerSettings& settings = {});

// Linear zero-sum utilities of the ES update, ordered by input index. Lower
// scalar fitness is better; tied values share their mean utility.
std::vector<double> rank_utilities(std::span<const double> fitness);

// --- driver ----------------------------------------------------------------

struct HistoryRow {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  ObjectiveVector best;
  std::uint64_t queries = 0;  // classifier queries spent in this round
};

inline constexpr std::string_view kHistoryCsvHeader = "epoch,batch,best_f1,best_f2,queries";
std::string to_csv_row(const HistoryRow& row);

// One selection round as seen by an observer.
struct RoundRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::vector<Candidate> parents;    // evaluated on this round's batch
  std::vector<Candidate> offspring;  // evaluated on this round's batch
  std::vector<Candidate> survivors;  // selected from parents + offspring
};

using RoundObserver = std::function<void(const RoundRecord&)>;

struct RunResult {
  FilterChain best;
  ObjectiveVector best_objectives;  // on the full training set
  std::vector<HistoryRow> history;
  std::vector<Candidate> final_population;  // evaluated on the full training set
  std::uint64_t queries = 0;
};

// Nested evolutionary search. The train set is cut into floor(n / batch_size)
// consecutive batches; each epoch visits every batch once.
RunResult run(const OuterConfig& cfg, const LabeledDataset& train, const Classifier& classifier,
              const SqueezerConfig& squeezers = {},
              double threshold = kDefaultDetectionThreshold, const RoundObserver& observer = {});

}  // namespace filterattack
