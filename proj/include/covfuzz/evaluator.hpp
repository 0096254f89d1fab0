#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "covfuzz/chromosome.hpp"
#include "covfuzz/coverage.hpp"
#include "covfuzz/model.hpp"
#include "covfuzz/mutation.hpp"

namespace covfuzz {

/// One seed image taking part in a search, with the image the semantic
/// constraint is measured against and the model's prediction for the seed.
struct ItemPatches;

struct BatchItem {
    const Tensor* image = nullptr;
    const Tensor* reference = nullptr;
    int label = 0;
    /// Optional precomputed region mutations (Evaluator::prepare); results are
    /// identical with or without them.
    const ItemPatches* patches = nullptr;
};

/// Every single-region mutation of one seed, with its distance to the
/// reference. Operators only read pixels inside their region, so a decoded
/// chromosome is the seed with the chosen patches pasted in.
struct ItemPatches {
    struct Patch {
        std::vector<float> pixels;
        ImageDistance distance;  // over the region, against the reference
        bool changed = false;    // differs from the seed
    };
    std::vector<Rect> regions;
    std::vector<ImageDistance> base;  // unmutated region against the reference
    std::vector<std::vector<Patch>> patches;  // [region][operator * levels + level]
};

/// Owns the patches for a batch and a copy of the items pointing at them.
struct PreparedBatch {
    PreparedBatch() = default;
    PreparedBatch(const PreparedBatch&) = delete;
    PreparedBatch& operator=(const PreparedBatch&) = delete;
    PreparedBatch(PreparedBatch&&) = default;
    PreparedBatch& operator=(PreparedBatch&&) = default;

    std::vector<ItemPatches> patches;
    std::vector<BatchItem> items;
};

struct Mutant {
    Tensor image;
    std::size_t item = 0;
    int label = 0;
};

struct Evaluation {
    /// Coverage fractions the surviving mutants add on top of the snapshot.
    CoverageVector gain;
    /// False when every mutant broke the constraint.
    bool feasible = false;
    std::size_t forwards = 0;
    std::size_t mutants = 0;
    std::size_t adversarial = 0;
    /// Bits hit by the surviving mutants.
    CoverageState local;
    /// Mutant that added the most bits over the snapshot (if any added).
    std::optional<Mutant> best;
    std::optional<Mutant> adversarial_example;
    /// Bits over the snapshot credited to each batch item.
    std::vector<std::size_t> item_gain;
};

/// Decodes chromosomes against a seed batch and measures their coverage gain.
/// Stateless apart from its configuration, so one instance may be shared by
/// concurrent evaluations.
class Evaluator {
public:
    Evaluator(const Model& model, const NeuronProfile& profile, RegionGrid grid,
              MutationTables tables, ConstraintParams constraint);

    const Model& model() const { return *model_; }
    const NeuronProfile& profile() const { return *profile_; }
    const RegionGrid& grid() const { return grid_; }
    const MutationTables& tables() const { return tables_; }
    const ConstraintParams& constraint() const { return constraint_; }
    MutationContext context() const { return {model_, profile_, constraint_, tables_}; }

    /// True if at least one seed's mutant satisfies the semantic constraint.
    /// No forward passes are spent.
    bool feasible(const Chromosome& c, std::span<const BatchItem> batch) const;

    PreparedBatch prepare(std::span<const BatchItem> batch) const;

    /// Mutants identical to their seed are skipped; they cannot add coverage.
    /// `snapshot` is read only.
    Evaluation evaluate(const Chromosome& c, std::span<const BatchItem> batch,
                        const CoverageState& snapshot) const;

private:
    /// Distance of the decoded mutant to the reference without building it.
    ImageDistance patched_distance(const Chromosome& c, const ItemPatches& p) const;
    bool patched_changes(const Chromosome& c, const ItemPatches& p) const;
    Tensor decode(const Chromosome& c, const BatchItem& item) const;

    const Model* model_;
    const NeuronProfile* profile_;
    RegionGrid grid_;
    MutationTables tables_;
    ConstraintParams constraint_;
};

}  // namespace covfuzz
