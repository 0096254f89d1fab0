#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "covfuzz/coverage.hpp"
#include "covfuzz/model.hpp"
#include "covfuzz/random.hpp"
#include "covfuzz/tensor.hpp"

namespace covfuzz {

/// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct Rect {
    std::size_t y0 = 0;
    std::size_t x0 = 0;
    std::size_t y1 = 0;
    std::size_t x1 = 0;

    std::size_t area() const { return (y1 - y0) * (x1 - x0); }
    bool contains(std::size_t y, std::size_t x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
    bool operator==(const Rect&) const = default;
};

/// rows x cols partition of an image; the last row and column absorb the remainder.
class RegionGrid {
public:
    RegionGrid(std::size_t height, std::size_t width, std::size_t rows, std::size_t cols);
    /// 2x2 for images whose shorter side is below 24 px, 3x3 otherwise.
    static RegionGrid for_image(std::size_t height, std::size_t width);

    std::size_t size() const { return rows_ * cols_; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    Rect region(std::size_t index) const;

private:
    std::size_t height_;
    std::size_t width_;
    std::size_t rows_;
    std::size_t cols_;
};

enum class Operator : std::uint8_t { Brightness = 0, Blur = 1, Contrast = 2 };
inline constexpr std::size_t kOperatorCount = 3;

struct MutationOp {
    Operator op = Operator::Brightness;
    std::size_t level = 0;
    bool operator==(const MutationOp&) const = default;
};

/// Per-operator level tables; every table must have the same length L.
struct MutationTables {
    std::vector<float> brightness{-40.0f, -20.0f, 10.0f, 20.0f, 40.0f};
    std::vector<float> contrast{0.6f, 0.8f, 1.1f, 1.25f, 1.5f};
    std::vector<int> blur{2, 3, 4, 5, 7};

    std::size_t levels() const { return brightness.size(); }
    /// Throws Error{Config} when the tables are inconsistent.
    void validate() const;
};

struct ConstraintParams {
    double alpha = 0.02;
    double beta = 0.2;
    void validate() const;
};

inline constexpr float kContrastPivot = 127.5f;

/// Applies `op` to the pixels of `region` in place; everything else is untouched.
void apply_in_place(Tensor& image, const Rect& region, const MutationOp& op,
                    const MutationTables& tables);
Tensor apply(const Tensor& image, const Rect& region, const MutationOp& op,
             const MutationTables& tables);

struct ImageDistance {
    std::size_t l0 = 0;   // number of changed values
    float linf = 0.0f;    // largest absolute change
};

ImageDistance image_distance(const Tensor& original, const Tensor& mutated);

/// Semantic constraint on a (changed-count, max-change) pair for an image of `size` values.
bool constraint_holds(std::size_t l0, double linf, std::size_t size, const ConstraintParams& params);
bool check_constraint(const Tensor& original, const Tensor& mutated, const ConstraintParams& params);

struct MutationContext {
    const Model* model = nullptr;
    const NeuronProfile* profile = nullptr;
    ConstraintParams constraint;
    MutationTables tables;
};

struct MutationSequence {
    std::vector<Tensor> mutants;
    std::vector<int> labels;
    std::vector<CoverageDelta> gains;
    std::size_t forwards = 0;
};

/// Cumulative random local mutation of one seed. Each step mutates one random
/// region with a random operator and level; the sequence ends when the result
/// breaks the constraint against `reference`, adds no new coverage to `state`,
/// or after `max_steps` steps. Every evaluated mutant is committed to `state`.
MutationSequence mutate_sequence(const Tensor& seed_image, const Tensor& reference,
                                 const MutationContext& ctx, const RegionGrid& grid,
                                 CoverageState& state, std::size_t max_steps, Rng& rng);

inline MutationSequence mutate_sequence(const Tensor& seed_image, const MutationContext& ctx,
                                        const RegionGrid& grid, CoverageState& state,
                                        std::size_t max_steps, Rng& rng) {
    return mutate_sequence(seed_image, seed_image, ctx, grid, state, max_steps, rng);
}

}  // namespace covfuzz
