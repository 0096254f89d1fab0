#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "covfuzz/coverage.hpp"

namespace covfuzz {

/// Objective vector in minimisation form (coverage gains are negated).
using Objectives = std::array<double, 3>;

inline Objectives to_minimization(const CoverageVector& v) { return {-v.kmnc, -v.nbc, -v.snac}; }

/// Pareto dominance for minimisation: no worse everywhere, strictly better somewhere.
bool dominates(const Objectives& a, const Objectives& b);

double euclidean(const Objectives& a, const Objectives& b);

struct Spea2Fitness {
    std::vector<std::size_t> strength;
    std::vector<double> raw;
    std::vector<double> density;
    std::vector<double> fitness;
};

/// Strength/raw/density fitness over the combined population and archive.
/// Density uses the k-th nearest neighbour with k = floor(sqrt(N)).
Spea2Fitness spea2_fitness(std::span<const Objectives> points);

/// SPEA2 environmental selection. Keeps every non-dominated point (F < 1),
/// truncating by iterated nearest-neighbour distance when over capacity and
/// filling with the best dominated points when under. Returns selected
/// indices in ascending order.
std::vector<std::size_t> spea2_truncation_select(std::span<const Objectives> points,
                                                 std::span<const double> fitness,
                                                 std::size_t capacity);

/// Simplex-lattice weight vectors {(i, j, k) / H : i + j + k = H}.
std::vector<Objectives> generate_weight_vectors(std::size_t divisions);

/// Distance from `point` to the ray spanned by `direction`.
double perpendicular_distance(const Objectives& point, const Objectives& direction);

struct DecompositionSelection {
    /// Selected candidate indices, ascending.
    std::vector<std::size_t> selected;
    /// Weight vector index per candidate.
    std::vector<std::size_t> assignment;
    /// Perpendicular distance per candidate to its weight ray.
    std::vector<double> distance;
    /// Normalised improvement per candidate (1 = ideal, 0 = nadir).
    std::vector<Objectives> normalized;
};

/// Maps minimisation objectives onto [0,1]^3 where 1 is the ideal point and 0
/// the observed nadir; the nadir is floored at ideal + 1e-9 per axis.
std::vector<Objectives> normalize_to_ideal(std::span<const Objectives> points, const Objectives& ideal);

/// Decomposition-based archive update. `ideal` is tightened with every point
/// first. Each candidate joins the weight vector with the smallest
/// perpendicular distance to its normalised improvement vector; each
/// subspace keeps its single non-dominated member closest to the ray.
DecompositionSelection decomposition_select(std::span<const Objectives> points,
                                            std::span<const Objectives> weights, Objectives& ideal,
                                            std::size_t capacity);

/// Fast non-dominated sort; fronts hold indices in ascending order.
std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const Objectives> points);

/// NSGA-III survivor selection with reference-point niching on `references`.
std::vector<std::size_t> nsga3_select(std::span<const Objectives> points,
                                      std::span<const Objectives> references, std::size_t count);

}  // namespace covfuzz
