#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "covfuzz/mutation.hpp"
#include "covfuzz/random.hpp"

namespace covfuzz {

/// Compound local mutation: which regions to touch, and with which operator
/// and level. All three parts have one gene per grid region.
struct Chromosome {
    std::vector<std::uint8_t> mask;
    std::vector<std::uint8_t> operators;
    std::vector<std::uint8_t> levels;

    Chromosome() = default;
    explicit Chromosome(std::size_t regions)
        : mask(regions, 0), operators(regions, 0), levels(regions, 0) {}

    std::size_t size() const { return mask.size(); }
    std::size_t active_regions() const;
    bool valid(std::size_t regions, std::size_t level_count) const;
    MutationOp op_at(std::size_t region) const {
        return {static_cast<Operator>(operators[region]), levels[region]};
    }

    /// Flat [mask | operators | levels] view, e.g. for logs.
    std::vector<int> flatten() const;

    bool operator==(const Chromosome&) const = default;
};

Chromosome random_chromosome(std::size_t regions, std::size_t level_count, double mask_probability,
                             Rng& rng);

/// Applies every masked region's operation to a copy of `image`.
Tensor decode_apply(const Chromosome& c, const Tensor& image, const RegionGrid& grid,
                    const MutationTables& tables);

struct VariationParams {
    double crossover_eta = 15.0;
    double mutation_eta = 20.0;
    double mutation_probability = 0.2;
};

/// Simulated binary crossover on the real relaxation of each gene, followed
/// by rounding (mask genes threshold at 0.5) and clamping into range.
std::pair<Chromosome, Chromosome> sbx_crossover(const Chromosome& a, const Chromosome& b,
                                                std::size_t level_count, double eta, Rng& rng);

/// Bounded polynomial mutation on the real relaxation of each gene. A gene
/// picked for mutation whose perturbation rounds back to its old value is
/// moved one step in the perturbation's direction, so every picked gene
/// changes. `mutated`, when given, receives the number of picked genes.
Chromosome polynomial_mutation(const Chromosome& c, double probability, std::size_t level_count,
                               double eta, Rng& rng, std::size_t* mutated = nullptr);

}  // namespace covfuzz
