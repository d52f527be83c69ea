#include "filterattack/evolve.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "filterattack/errors.hpp"
#include "filterattack/parallel.hpp"

namespace filterattack {

std::string_view inner_name(InnerKind kind) {
  switch (kind) {
    case InnerKind::GA:
      return "GA";
    case InnerKind::ES:
      return "ES";
    case InnerKind::Tournament:
      return "Tournament";
  }
  return "?";
}

InnerKind parse_inner_kind(std::string_view text) {
  std::string lower;
  for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "ga") return InnerKind::GA;
  if (lower == "es") return InnerKind::ES;
  if (lower == "tournament") return InnerKind::Tournament;
  throw ParseError("unknown inner optimizer '" + std::string(text) + "'");
}

void OuterConfig::validate() const {
  if (population_size < 1) throw ArgumentError("population size must be positive");
  if (chain_length < kMinChainLength || chain_length > kMaxChainLength) {
    throw ArgumentError("chain_length must lie in [3, 5]");
  }
  if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) {
    throw ArgumentError("mutation_prob must lie in [0, 1]");
  }
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  if (inner_settings.population < 1) throw ArgumentError("inner population must be positive");
  if (inner_settings.es_lambda < 1) throw ArgumentError("ES lambda must be positive");
  if (!(inner_settings.mutation_prob >= 0.0 && inner_settings.mutation_prob <= 1.0)) {
    throw ArgumentError("inner mutation_prob must lie in [0, 1]");
  }
  if (!(inner_settings.es_sigma_scale >= 0.0) || !(inner_settings.es_eta_scale >= 0.0)) {
    throw ArgumentError("ES step scales must be non-negative");
  }
  if (threads < 1) throw ArgumentError("threads must be positive");
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct Counts {
  std::size_t images = 0;
  std::size_t changed = 0;
  std::size_t flagged = 0;
};

ObjectiveVector to_objectives(const Counts& c) {
  const double n = static_cast<double>(c.images);
  return ObjectiveVector(static_cast<double>(c.images - c.changed) / n,
                         static_cast<double>(c.flagged) / n);
}

Counts count_outcomes(const FilterChain& chain, std::span<const Image> images,
                      std::span<const int> original_labels, const FeatureSqueezeDetector& detector,
                      int threads) {
  const std::size_t n = images.size();
  std::vector<char> changed(n), flagged(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const Image adv = apply_chain(images[i], chain);
    const PredictionVector p = detector.classifier().predict(adv);
    changed[i] = argmax(p) != original_labels[i];
    flagged[i] = detector.verdict(adv, p).flagged;
  });
  Counts c{n, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    c.changed += changed[i];
    c.flagged += flagged[i];
  }
  return c;
}

std::vector<int> labels_of(const Classifier& classifier, std::span<const Image> images, int threads) {
  std::vector<int> labels(images.size());
  parallel_for(images.size(), threads,
               [&](std::size_t i) { labels[i] = predict_label(classifier, images[i]); });
  return labels;
}

}  // namespace

ObjectiveVector evaluate_candidate(const FilterChain& chain, const LabeledDataset& batch,
                                   const FeatureSqueezeDetector& detector, int threads) {
  if (batch.images.empty()) throw ArgumentError("evaluate_candidate: empty batch");
  const auto labels = labels_of(detector.classifier(), batch.images, threads);
  return to_objectives(count_outcomes(chain, batch.images, labels, detector, threads));
}

BatchEvaluator::BatchEvaluator(const FeatureSqueezeDetector& detector,
                               std::vector<std::vector<Image>> batches, int threads)
    : detector_(detector), batches_(std::move(batches)), labels_(batches_.size()), threads_(threads) {
  for (const auto& b : batches_) {
    if (b.empty()) throw ArgumentError("BatchEvaluator: empty batch");
  }
}

const std::vector<int>& BatchEvaluator::original_labels(std::size_t batch_id) {
  auto& slot = labels_.at(batch_id);
  if (!slot) slot = labels_of(detector_.classifier(), batches_[batch_id], threads_);
  return *slot;
}

ObjectiveVector BatchEvaluator::evaluate(const FilterChain& chain, std::size_t batch_id) {
  if (batch_id >= batches_.size()) throw ArgumentError("unknown batch id");
  auto key = std::make_pair(chain.serialize(), batch_id);
  if (auto it = cache_.find(key); it != cache_.end()) {
    ++hits_;
    return it->second;
  }
  const auto& labels = original_labels(batch_id);
  const ObjectiveVector obj =
      to_objectives(count_outcomes(chain, batches_[batch_id], labels, detector_, threads_));
  cache_.emplace(std::move(key), obj);
  return obj;
}

// ---------------------------------------------------------------------------
// Outer operators

namespace {

std::vector<FilterKind> unused_kinds(const std::array<bool, kNumFilterKinds>& used) {
  std::vector<FilterKind> out;
  for (FilterKind k : kAllFilterKinds) {
    if (!used[static_cast<std::size_t>(k)]) out.push_back(k);
  }
  return out;
}

}  // namespace

std::vector<Candidate> init_population(const OuterConfig& cfg, Rng& rng) {
  if (cfg.chain_length > kMaxChainLength) {
    throw ArgumentError("chain length exceeds the number of filters");
  }
  std::vector<Candidate> population;
  population.reserve(cfg.population_size);
  for (std::size_t n = 0; n < cfg.population_size; ++n) {
    std::array<FilterKind, kNumFilterKinds> kinds = kAllFilterKinds;
    for (std::size_t i = kinds.size() - 1; i > 0; --i) std::swap(kinds[i], kinds[rng.index(i + 1)]);
    std::vector<FilterGene> genes;
    for (std::size_t i = 0; i < cfg.chain_length; ++i) genes.push_back(FilterGene::make(kinds[i], 1.0, 1.0));
    population.push_back({FilterChain(std::move(genes)), std::nullopt, -1});
  }
  return population;
}

FilterChain crossover_at(const FilterChain& p1, const FilterChain& p2, std::size_t cut, Rng& rng) {
  if (p1.size() != p2.size()) throw ArgumentError("crossover: parents differ in length");
  if (cut < 1 || cut >= p1.size()) throw ArgumentError("crossover: cut point out of range");
  std::vector<FilterGene> genes;
  std::array<bool, kNumFilterKinds> used{};
  for (std::size_t i = 0; i < cut; ++i) {
    genes.push_back(p1[i]);
    used[static_cast<std::size_t>(p1[i].kind)] = true;
  }
  std::vector<std::size_t> repair;
  for (std::size_t i = cut; i < p2.size(); ++i) {
    genes.push_back(p2[i]);
    auto& flag = used[static_cast<std::size_t>(p2[i].kind)];
    if (flag) {
      repair.push_back(genes.size() - 1);
    } else {
      flag = true;
    }
  }
  for (std::size_t pos : repair) {
    const auto free = unused_kinds(used);
    const FilterKind k = free[rng.index(free.size())];
    genes[pos] = random_gene(k, rng);
    used[static_cast<std::size_t>(k)] = true;
  }
  return FilterChain(std::move(genes));
}

FilterChain crossover(const FilterChain& p1, const FilterChain& p2, Rng& rng) {
  if (p1.size() != p2.size()) throw ArgumentError("crossover: parents differ in length");
  const std::size_t cut = 1 + rng.index(p1.size() - 1);
  return crossover_at(p1, p2, cut, rng);
}

FilterChain mutate(const FilterChain& chain, double prob, Rng& rng) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw ArgumentError("mutation probability outside [0, 1]");
  std::vector<FilterGene> genes(chain.genes().begin(), chain.genes().end());
  for (std::size_t i = 0; i < genes.size(); ++i) {
    if (!rng.bernoulli(prob)) continue;
    std::array<bool, kNumFilterKinds> used{};
    for (std::size_t j = 0; j < genes.size(); ++j) {
      if (j != i) used[static_cast<std::size_t>(genes[j].kind)] = true;
    }
    const auto free = unused_kinds(used);
    genes[i] = random_gene(free[rng.index(free.size())], rng);
  }
  return FilterChain(std::move(genes));
}

// ---------------------------------------------------------------------------
// Inner optimizers

namespace {

std::vector<double> random_parameters(std::size_t count, Rng& rng) {
  std::vector<double> p(count);
  for (std::size_t i = 0; i < count; ++i) {
    p[i] = rng.uniform(parameter_lower_bound(i), parameter_upper_bound(i));
  }
  return p;
}

struct Scored {
  FilterChain chain;
  ObjectiveVector objectives;
};

}  // namespace

FilterChain inner_optimize_ga(const FilterChain& chain, const ChainEvaluator& evaluate, Rng& rng,
                              const InnerSettings& settings) {
  const std::size_t dims = chain.size() * 2;
  std::vector<Scored> population;
  population.push_back({chain, evaluate(chain)});
  for (std::size_t k = 1; k < settings.population; ++k) {
    FilterChain c = chain.with_parameters(random_parameters(dims, rng));
    population.push_back({c, evaluate(c)});
  }

  for (std::size_t g = 0; g < settings.generations; ++g) {
    std::vector<Scored> pool = population;
    for (std::size_t k = 0; k < settings.population; ++k) {
      const auto a = population[rng.index(population.size())].chain.parameters();
      const auto b = population[rng.index(population.size())].chain.parameters();
      const std::size_t cut = 1 + rng.index(dims - 1);
      std::vector<double> child(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(cut));
      child.insert(child.end(), b.begin() + static_cast<std::ptrdiff_t>(cut), b.end());
      for (std::size_t i = 0; i < dims; ++i) {
        if (rng.bernoulli(settings.mutation_prob)) {
          child[i] = rng.uniform(parameter_lower_bound(i), parameter_upper_bound(i));
        }
      }
      FilterChain c = chain.with_parameters(child);
      pool.push_back({c, evaluate(c)});
    }
    std::vector<ObjectiveVector> objs;
    for (const auto& s : pool) objs.push_back(s.objectives);
    std::vector<Scored> next;
    for (std::size_t idx : nsga2_select(objs, settings.population)) next.push_back(pool[idx]);
    population = std::move(next);
  }

  std::vector<ObjectiveVector> objs;
  for (const auto& s : population) objs.push_back(s.objectives);
  const auto ranked = rank_population(objs);
  std::size_t best = 0;
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    const auto& b = ranked[best];
    if (r.front_rank < b.front_rank || (r.front_rank == b.front_rank && r.crowding > b.crowding)) best = i;
  }
  return population[best].chain;
}

std::vector<double> rank_utilities(std::span<const double> fitness) {
  const std::size_t n = fitness.size();
  std::vector<double> utilities(n, 0.0);
  if (n < 2) return utilities;
  const double centre = (static_cast<double>(n) - 1.0) / 2.0;
  double norm = 0.0;
  for (std::size_t r = 0; r < n; ++r) norm += std::abs(centre - static_cast<double>(r));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && fitness[order[end]] == fitness[order[start]]) ++end;
    double mean = 0.0;
    for (std::size_t r = start; r < end; ++r) mean += (centre - static_cast<double>(r)) / norm;
    mean /= static_cast<double>(end - start);
    for (std::size_t r = start; r < end; ++r) utilities[order[r]] = mean;
    start = end;
  }
  return utilities;
}

FilterChain inner_optimize_es(const FilterChain& chain, const ChainEvaluator& evaluate, Rng& rng,
                              const InnerSettings& settings) {
  const std::size_t dims = chain.size() * 2;
  const std::size_t lambda = settings.es_lambda;
  std::vector<double> theta = chain.parameters();
  std::vector<double> sigma(dims), eta(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    sigma[d] = settings.es_sigma_scale * (parameter_upper_bound(d) - parameter_lower_bound(d));
    eta[d] = settings.es_eta_scale * sigma[d];
  }

  std::vector<std::vector<double>> eps(lambda, std::vector<double>(dims));
  std::vector<double> fitness(lambda);
  for (std::size_t it = 0; it < settings.generations; ++it) {
    for (std::size_t j = 0; j < lambda; ++j) {
      std::vector<double> sample(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        eps[j][d] = rng.normal();
        sample[d] = std::clamp(theta[d] + sigma[d] * eps[j][d], parameter_lower_bound(d),
                               parameter_upper_bound(d));
      }
      const ObjectiveVector o = evaluate(chain.with_parameters(sample));
      fitness[j] = o.f1 + o.f2;
    }
    const auto u = rank_utilities(fitness);
    for (std::size_t d = 0; d < dims; ++d) {
      if (sigma[d] == 0.0) continue;
      double g = 0.0;
      for (std::size_t j = 0; j < lambda; ++j) g += u[j] * eps[j][d];
      theta[d] += eta[d] / (static_cast<double>(lambda) * sigma[d]) * g;
      theta[d] = quantize_parameter(
          std::clamp(theta[d], parameter_lower_bound(d), parameter_upper_bound(d)));
    }
  }
  return chain.with_parameters(theta);
}

FilterChain inner_optimize_tournament(const FilterChain& chain, const ChainEvaluator& evaluate,
                                      Rng& rng, const InnerSettings& settings) {
  FilterChain incumbent = chain;
  ObjectiveVector incumbent_obj = evaluate(chain);
  for (std::size_t round = 0; round < settings.generations; ++round) {
    FilterChain challenger = chain.with_parameters(random_parameters(chain.size() * 2, rng));
    const ObjectiveVector challenger_obj = evaluate(challenger);
    if (dominates(challenger_obj, incumbent_obj)) {
      incumbent = std::move(challenger);
      incumbent_obj = challenger_obj;
    }
  }
  return incumbent;
}

FilterChain inner_optimize(InnerKind kind, const FilterChain& chain, const ChainEvaluator& evaluate,
                           Rng& rng, const InnerSettings& settings) {
  switch (kind) {
    case InnerKind::GA:
      return inner_optimize_ga(chain, evaluate, rng, settings);
    case InnerKind::ES:
      return inner_optimize_es(chain, evaluate, rng, settings);
    case InnerKind::Tournament:
      return inner_optimize_tournament(chain, evaluate, rng, settings);
  }
  throw ArgumentError("unknown inner optimizer");
}

// ---------------------------------------------------------------------------
// Driver

std::string to_csv_row(const HistoryRow& row) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%llu", row.epoch, row.batch, row.best.f1,
                row.best.f2, static_cast<unsigned long long>(row.queries));
  return buf;
}

namespace {

// Lowest f1, then lowest f2, then lowest index. The lexicographic minimum is
// always non-dominated.
std::size_t best_index(const std::vector<Candidate>& population) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < population.size(); ++i) {
    const auto& a = *population[i].objectives;
    const auto& b = *population[best].objectives;
    if (a.f1 < b.f1 || (a.f1 == b.f1 && a.f2 < b.f2)) best = i;
  }
  return best;
}

}  // namespace

RunResult run(const OuterConfig& cfg, const LabeledDataset& train, const Classifier& classifier,
              const SqueezerConfig& squeezers, double threshold, const RoundObserver& observer) {
  cfg.validate();
  if (train.size() < cfg.batch_size) {
    throw ArgumentError("training set has " + std::to_string(train.size()) +
                        " images, fewer than one batch of " + std::to_string(cfg.batch_size));
  }
  const CountingClassifier counted(classifier);
  const FeatureSqueezeDetector detector(counted, squeezers, threshold);

  const std::size_t k_batches = train.size() / cfg.batch_size;
  std::vector<std::vector<Image>> batches;
  for (std::size_t k = 0; k < k_batches; ++k) {
    const auto first = train.images.begin() + static_cast<std::ptrdiff_t>(k * cfg.batch_size);
    batches.emplace_back(first, first + static_cast<std::ptrdiff_t>(cfg.batch_size));
  }
  const std::size_t full_set = batches.size();
  batches.push_back(train.images);
  BatchEvaluator evaluator(detector, std::move(batches), cfg.threads);

  Rng rng(cfg.seed);
  std::vector<Candidate> population = init_population(cfg, rng);
  for (auto& c : population) {
    c.objectives = evaluator.evaluate(c.chain, 0);
    c.eval_batch_id = 0;
  }

  RunResult result{population.front().chain, {}, {}, {}, 0};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t b = 0; b < k_batches; ++b) {
      const std::uint64_t queries_before = counted.queries();
      const ChainEvaluator on_batch = [&](const FilterChain& chain) {
        return evaluator.evaluate(chain, b);
      };

      std::vector<Candidate> offspring;
      offspring.reserve(cfg.population_size);
      for (std::size_t n = 0; n < cfg.population_size; ++n) {
        const FilterChain& p1 = population[rng.index(population.size())].chain;
        const FilterChain& p2 = population[rng.index(population.size())].chain;
        FilterChain child = mutate(crossover(p1, p2, rng), cfg.mutation_prob, rng);
        child = inner_optimize(cfg.inner, child, on_batch, rng, cfg.inner_settings);
        offspring.push_back({child, std::nullopt, -1});
      }
      for (auto& c : offspring) {
        c.objectives = on_batch(c.chain);
        c.eval_batch_id = static_cast<long>(b);
      }
      for (auto& c : population) {
        c.objectives = on_batch(c.chain);
        c.eval_batch_id = static_cast<long>(b);
      }

      std::vector<Candidate> pool = population;
      pool.insert(pool.end(), offspring.begin(), offspring.end());
      std::vector<ObjectiveVector> objs;
      for (const auto& c : pool) objs.push_back(*c.objectives);
      std::vector<Candidate> survivors;
      for (std::size_t idx : nsga2_select(objs, cfg.population_size)) survivors.push_back(pool[idx]);

      if (observer) observer({epoch, b, population, offspring, survivors});
      population = std::move(survivors);
      result.history.push_back({epoch, b, *population[best_index(population)].objectives,
                                counted.queries() - queries_before});
    }
  }

  for (auto& c : population) {
    c.objectives = evaluator.evaluate(c.chain, full_set);
    c.eval_batch_id = static_cast<long>(full_set);
  }
  const std::size_t best = best_index(population);
  result.best = population[best].chain;
  result.best_objectives = *population[best].objectives;
  result.final_population = std::move(population);
  result.queries = counted.queries();
  return result;
}

}  // namespace filterattack
