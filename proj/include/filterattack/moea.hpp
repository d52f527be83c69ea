#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace filterattack {

// (1 - ASR, DR); both minimized.
struct ObjectiveVector {
  double f1 = 1.0;
  double f2 = 0.0;

  ObjectiveVector() = default;
  // Throws ArgumentError unless both components lie in [0, 1].
  ObjectiveVector(double f1, double f2);

  friend bool operator==(const ObjectiveVector&, const ObjectiveVector&) = default;
};

struct RankedIndividual {
  std::size_t id = 0;
  ObjectiveVector objectives;
  std::size_t front_rank = 0;
  double crowding = 0.0;
};

inline constexpr double kInfiniteCrowding = std::numeric_limits<double>::infinity();

// a <= b component-wise and a != b.
bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);

// Fast non-dominated sort. Fronts list indices in ascending order; front 0 is
// the non-dominated set. Throws ArgumentError on empty input.
std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const ObjectiveVector> points);

// Crowding distance of each point of one front. Boundary points of each
// objective get infinity; an objective with zero range adds nothing.
std::vector<double> crowding_distance(std::span<const ObjectiveVector> front);

// Front rank and crowding distance for every point; id is the input index.
std::vector<RankedIndividual> rank_population(std::span<const ObjectiveVector> points);

// NSGA-II environmental selection of n individuals: ascending front rank,
// then descending crowding, then ascending id. Returns the chosen ids sorted
// ascending.
std::vector<std::size_t> nsga2_select(std::span<const RankedIndividual> candidates, std::size_t n);
std::vector<std::size_t> nsga2_select(std::span<const ObjectiveVector> points, std::size_t n);

}  // namespace filterattack
