#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covfuzz/chromosome.hpp"
#include "covfuzz/evaluator.hpp"
#include "covfuzz/mcts.hpp"
#include "covfuzz/pareto.hpp"

namespace covfuzz {

enum class SearchAlgorithm { Spea2Mcts, Spea2Decomposition, Nsga3, RandomMutation, MctsOnly };

std::string to_string(SearchAlgorithm a);
SearchAlgorithm parse_search_algorithm(std::string_view name);

struct SearchConfig {
    std::size_t population = 40;
    std::size_t archive = 40;
    std::size_t iterations = 40;
    VariationParams variation;
    std::size_t weight_divisions = 7;
    double init_mask_probability = 0.5;
    MctsParams mcts;
    double repair_c0 = 0.1;
    double repair_c1 = 0.9;
    /// Step cap of one random mutation sequence.
    std::size_t mutation_max_steps = 10;
    /// Forward passes per batch for the non-evolutionary searches when no
    /// budget is given: what population x iterations evaluations would cost.
    std::size_t natural_budget(std::size_t batch_size) const { return population * iterations * batch_size; }
    std::size_t workers = 1;

    void validate() const;
};

/// Forward-pass allowance of one search call; limit 0 means unlimited.
struct ForwardBudget {
    std::size_t limit = 0;
    std::size_t used = 0;

    bool unlimited() const { return limit == 0; }
    std::size_t remaining() const { return unlimited() ? SIZE_MAX : (used >= limit ? 0 : limit - used); }
    bool affords(std::size_t n) const { return remaining() >= n; }
    bool exhausted() const { return remaining() == 0; }
    void spend(std::size_t n) { used += n; }
};

struct Individual {
    std::size_t id = 0;
    Chromosome chromosome;
    CoverageVector objectives;
    double fitness = 0.0;
    bool feasible = false;
    bool evaluated = false;
};

/// A mutant produced by the search, kept as a corpus candidate.
struct GeneratedTest {
    Tensor image;
    std::size_t item = 0;
    int label = 0;
    bool adversarial = false;
    /// Bits it added to the global state when committed.
    std::size_t committed_bits = 0;
};

struct GenerationLog {
    std::size_t generation = 0;
    CoverageVector best;
    std::size_t archive_size = 0;
    double feasible_fraction = 0.0;
    std::size_t repairs = 0;
    std::size_t refills = 0;
    std::size_t forwards = 0;
};

/// Everything a search needs from its caller. The global state is updated at
/// commit points only.
struct SearchEnvironment {
    const Evaluator* evaluator = nullptr;
    std::span<const BatchItem> batch;
    CoverageState* global = nullptr;
    ForwardBudget budget;
    /// Optional per-rollout trace sink for MCTS debugging.
    std::vector<RolloutRecord>* mcts_trace = nullptr;
};

struct SearchTotals {
    std::size_t forwards = 0;
    std::size_t mutants = 0;
    std::size_t adversarial = 0;
};

/// Population, archive and bookkeeping of an evolutionary search.
struct EvolutionState {
    std::vector<Individual> population;
    std::vector<Individual> archive;
    std::size_t generation = 0;
    std::size_t next_id = 0;
    Objectives ideal{0.0, 0.0, 0.0};
    std::vector<Objectives> weights;
    std::vector<std::size_t> assignment;  // decomposition mode: weight per archive member
    CoverageVector best;
    Chromosome best_chromosome;
    bool budget_exhausted = false;
    SearchTotals totals;
    std::vector<GeneratedTest> tests;
    std::vector<std::size_t> item_bits;
    std::vector<GenerationLog> log;
};

class EvolutionEngine {
public:
    EvolutionEngine(SearchAlgorithm algorithm, SearchConfig config, SearchEnvironment& env, Rng& rng);

    /// Random initial population; the archive starts empty.
    EvolutionState initialize();
    /// evaluate -> fitness -> environmental selection -> update best -> variation.
    void run_generation_spea2(EvolutionState& state);
    void run_generation_nsga3(EvolutionState& state);
    void run_generation(EvolutionState& state);
    /// Runs `iterations` generations, stopping early when the budget runs out.
    void run(EvolutionState& state);

    Individual tournament(const std::vector<Individual>& pool);

private:
    void evaluate_pending(EvolutionState& state, std::vector<Individual>& group);
    std::vector<Individual> offspring(EvolutionState& state, const std::vector<Individual>& parents,
                                      bool tournament_mating);
    void repair(EvolutionState& state, std::vector<Individual>& children, GenerationLog& row);
    void update_best(EvolutionState& state, const std::vector<Individual>& pool);
    Individual fresh(EvolutionState& state);

    SearchAlgorithm algorithm_;
    SearchConfig config_;
    SearchEnvironment* env_;
    Rng* rng_;
};

struct SearchOutcome {
    SearchTotals totals;
    std::vector<GeneratedTest> tests;
    /// Bits each batch item's mutants added to the global state.
    std::vector<std::size_t> item_bits;
    std::vector<GenerationLog> generations;
    CoverageVector best;
};

/// Runs one search over the batch, committing coverage into `*env.global`.
SearchOutcome run_search(SearchAlgorithm algorithm, const SearchConfig& config, SearchEnvironment& env,
                         Rng& rng);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace covfuzz
