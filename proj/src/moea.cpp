#include "filterattack/moea.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "filterattack/errors.hpp"

namespace filterattack {

ObjectiveVector::ObjectiveVector(double f1_, double f2_) : f1(f1_), f2(f2_) {
  if (!(f1 >= 0.0 && f1 <= 1.0) || !(f2 >= 0.0 && f2 <= 1.0)) {
    throw ArgumentError("objective components must lie in [0, 1]");
  }
}

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  return a.f1 <= b.f1 && a.f2 <= b.f2 && (a.f1 < b.f1 || a.f2 < b.f2);
}

std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const ObjectiveVector> points) {
  if (points.empty()) throw ArgumentError("non_dominated_sort: empty population");
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> dominated_by(n);
  std::vector<std::size_t> domination_count(n, 0);
  std::vector<std::vector<std::size_t>> fronts(1);

  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (dominates(points[p], points[q])) {
        dominated_by[p].push_back(q);
        ++domination_count[q];
      } else if (dominates(points[q], points[p])) {
        dominated_by[q].push_back(p);
        ++domination_count[p];
      }
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (domination_count[p] == 0) fronts[0].push_back(p);
  }
  for (std::size_t k = 0; !fronts[k].empty(); ++k) {
    std::vector<std::size_t> next;
    for (std::size_t p : fronts[k]) {
      for (std::size_t q : dominated_by[p]) {
        if (--domination_count[q] == 0) next.push_back(q);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  return fronts;
}

std::vector<double> crowding_distance(std::span<const ObjectiveVector> front) {
  const std::size_t n = front.size();
  std::vector<double> distance(n, 0.0);
  if (n == 0) return distance;
  if (n <= 2) return std::vector<double>(n, kInfiniteCrowding);

  std::vector<std::size_t> order(n);
  for (int objective = 0; objective < 2; ++objective) {
    auto value = [&](std::size_t i) { return objective == 0 ? front[i].f1 : front[i].f2; };
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
    distance[order.front()] = kInfiniteCrowding;
    distance[order.back()] = kInfiniteCrowding;
    const double range = value(order.back()) - value(order.front());
    if (range <= 0.0) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      distance[order[k]] += (value(order[k + 1]) - value(order[k - 1])) / range;
    }
  }
  return distance;
}

std::vector<RankedIndividual> rank_population(std::span<const ObjectiveVector> points) {
  std::vector<RankedIndividual> ranked(points.size());
  const auto fronts = non_dominated_sort(points);
  for (std::size_t r = 0; r < fronts.size(); ++r) {
    std::vector<ObjectiveVector> members;
    members.reserve(fronts[r].size());
    for (std::size_t i : fronts[r]) members.push_back(points[i]);
    const auto crowd = crowding_distance(members);
    for (std::size_t k = 0; k < fronts[r].size(); ++k) {
      const std::size_t i = fronts[r][k];
      ranked[i] = {i, points[i], r, crowd[k]};
    }
  }
  return ranked;
}

std::vector<std::size_t> nsga2_select(std::span<const RankedIndividual> candidates, std::size_t n) {
  if (n > candidates.size()) {
    throw ArgumentError("cannot select " + std::to_string(n) + " of " +
                        std::to_string(candidates.size()) + " candidates");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = candidates[a];
    const auto& y = candidates[b];
    if (x.front_rank != y.front_rank) return x.front_rank < y.front_rank;
    if (x.crowding != y.crowding) return x.crowding > y.crowding;
    return x.id < y.id;
  });
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t k = 0; k < n; ++k) chosen.push_back(candidates[order[k]].id);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<std::size_t> nsga2_select(std::span<const ObjectiveVector> points, std::size_t n) {
  const auto ranked = rank_population(points);
  return nsga2_select(ranked, n);
}

}  // namespace filterattack
