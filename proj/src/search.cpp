#include "covfuzz/search.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "covfuzz/error.hpp"

namespace covfuzz {

std::string to_string(SearchAlgorithm a) {
    switch (a) {
    case SearchAlgorithm::Spea2Mcts: return "spea2-mcts";
    case SearchAlgorithm::Spea2Decomposition: return "spea2-decomp";
    case SearchAlgorithm::Nsga3: return "nsga3";
    case SearchAlgorithm::RandomMutation: return "random-mutation";
    case SearchAlgorithm::MctsOnly: return "mcts-only";
    }
    return "?";
}

SearchAlgorithm parse_search_algorithm(std::string_view name) {
    for (auto a : {SearchAlgorithm::Spea2Mcts, SearchAlgorithm::Spea2Decomposition, SearchAlgorithm::Nsga3,
                   SearchAlgorithm::RandomMutation, SearchAlgorithm::MctsOnly})
        if (to_string(a) == name) return a;
    throw Error(ErrorCode::Config, "unknown search algorithm '" + std::string(name) + "'");
}

void SearchConfig::validate() const {
    if (population < 2) throw Error(ErrorCode::Config, "population must be >= 2");
    if (archive < 1) throw Error(ErrorCode::Config, "archive must be >= 1");
    if (weight_divisions < 1) throw Error(ErrorCode::Config, "weight divisions must be >= 1");
    if (!(variation.mutation_probability >= 0.0 && variation.mutation_probability <= 1.0))
        throw Error(ErrorCode::Config, "mutation probability must be in [0, 1]");
    if (!(variation.crossover_eta >= 0.0) || !(variation.mutation_eta >= 0.0))
        throw Error(ErrorCode::Config, "distribution indices must be >= 0");
    if (!(init_mask_probability >= 0.0 && init_mask_probability <= 1.0))
        throw Error(ErrorCode::Config, "initial mask probability must be in [0, 1]");
    if (!(repair_c0 >= 0.0 && repair_c0 <= repair_c1 && repair_c1 <= 1.0))
        throw Error(ErrorCode::Config, "repair threshold needs 0 <= c0 <= c1 <= 1");
    if (mutation_max_steps < 1) throw Error(ErrorCode::Config, "mutation steps must be >= 1");
    mcts.validate();
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

std::vector<Objectives> objectives_of(const std::vector<Individual>& group) {
    std::vector<Objectives> out;
    out.reserve(group.size());
    for (const auto& ind : group) out.push_back(to_minimization(ind.objectives));
    return out;
}

// Worst-case forward passes of one MCTS call.
std::size_t mcts_cost(const MctsParams& p) { return p.rollouts * (p.max_depth / 2); }

}  // namespace

EvolutionEngine::EvolutionEngine(SearchAlgorithm algorithm, SearchConfig config, SearchEnvironment& env,
                                 Rng& rng)
    : algorithm_(algorithm), config_(std::move(config)), env_(&env), rng_(&rng) {
    config_.validate();
    if (algorithm_ == SearchAlgorithm::RandomMutation || algorithm_ == SearchAlgorithm::MctsOnly)
        throw Error(ErrorCode::Config, to_string(algorithm_) + " is not an evolutionary search");
    if (!env.evaluator || !env.global) throw Error(ErrorCode::Invariant, "search environment incomplete");
    if (env.batch.empty()) throw Error(ErrorCode::Config, "search batch is empty");
}

Individual EvolutionEngine::fresh(EvolutionState& state) {
    Individual ind;
    ind.id = state.next_id++;
    ind.chromosome = random_chromosome(env_->evaluator->grid().size(), env_->evaluator->tables().levels(),
                                       config_.init_mask_probability, *rng_);
    return ind;
}

EvolutionState EvolutionEngine::initialize() {
    EvolutionState state;
    state.weights = generate_weight_vectors(config_.weight_divisions);
    state.item_bits.assign(env_->batch.size(), 0);
    state.best_chromosome = Chromosome(env_->evaluator->grid().size());
    for (std::size_t i = 0; i < config_.population; ++i) state.population.push_back(fresh(state));
    return state;
}

Individual EvolutionEngine::tournament(const std::vector<Individual>& pool) {
    const Individual& a = pool[rng_->below(pool.size())];
    const Individual& b = pool[rng_->below(pool.size())];
    if (a.fitness < b.fitness) return a;
    if (b.fitness < a.fitness) return b;
    return rng_->bernoulli(0.5) ? a : b;
}

void EvolutionEngine::evaluate_pending(EvolutionState& state, std::vector<Individual>& group) {
    const std::size_t cost = env_->batch.size();
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < group.size(); ++i) {
        if (group[i].evaluated) continue;
        if (!env_->budget.affords(cost * (todo.size() + 1))) {
            state.budget_exhausted = true;
            group[i].evaluated = true;  // scored as an empty, infeasible individual
            continue;
        }
        todo.push_back(i);
    }

    const CoverageState snapshot = *env_->global;
    std::vector<Evaluation> results(todo.size());
    parallel_for(todo.size(), config_.workers, [&](std::size_t t) {
        results[t] = env_->evaluator->evaluate(group[todo[t]].chromosome, env_->batch, snapshot);
    });

    // Commit in id order so the outcome never depends on worker scheduling.
    for (std::size_t t = 0; t < todo.size(); ++t) {
        Individual& ind = group[todo[t]];
        Evaluation& e = results[t];
        ind.objectives = e.gain;
        ind.feasible = e.feasible;
        ind.evaluated = true;
        env_->budget.spend(e.forwards);
        state.totals.forwards += e.forwards;
        state.totals.mutants += e.mutants;
        state.totals.adversarial += e.adversarial;
        for (std::size_t i = 0; i < e.item_gain.size(); ++i) state.item_bits[i] += e.item_gain[i];

        const std::size_t committed = bits_not_in(e.local, *env_->global).total();
        merge_into(*env_->global, e.local);
        if (e.best && committed > 0) {
            const BatchItem& item = env_->batch[e.best->item];
            state.tests.push_back({std::move(e.best->image), e.best->item, e.best->label,
                                   e.best->label != item.label, committed});
        }
        if (e.adversarial_example)
            state.tests.push_back({std::move(e.adversarial_example->image), e.adversarial_example->item,
                                   e.adversarial_example->label, true, 0});
    }
}

void EvolutionEngine::update_best(EvolutionState& state, const std::vector<Individual>& pool) {
    for (const auto& ind : pool) {
        if (ind.objectives.sum() > state.best.sum()) {
            state.best = ind.objectives;
            state.best_chromosome = ind.chromosome;
        }
    }
}

std::vector<Individual> EvolutionEngine::offspring(EvolutionState& state, const std::vector<Individual>& parents,
                                                   bool tournament_mating) {
    std::vector<Individual> children;
    const std::size_t levels = env_->evaluator->tables().levels();
    const auto& v = config_.variation;
    while (children.size() < config_.population) {
        const Individual p1 = tournament_mating ? tournament(parents) : parents[rng_->below(parents.size())];
        const Individual p2 = tournament_mating ? tournament(parents) : parents[rng_->below(parents.size())];
        auto [c1, c2] = sbx_crossover(p1.chromosome, p2.chromosome, levels, v.crossover_eta, *rng_);
        for (Chromosome* c : {&c1, &c2}) {
            if (children.size() == config_.population) break;
            Individual child;
            child.id = state.next_id++;
            child.chromosome = polynomial_mutation(*c, v.mutation_probability, levels, v.mutation_eta, *rng_);
            children.push_back(std::move(child));
        }
    }
    return children;
}

void EvolutionEngine::repair(EvolutionState& state, std::vector<Individual>& children, GenerationLog& row) {
    const double threshold =
        repair_threshold(state.generation, config_.iterations, config_.repair_c0, config_.repair_c1);
    const BatchItem& rep = env_->batch.front();
    const MutationContext ctx = env_->evaluator->context();
    const CoverageState snapshot = *env_->global;
    CoverageState explored(snapshot.neurons, snapshot.k);
    std::vector<GeneratedTest> found;

    for (auto& child : children) {
        if (env_->evaluator->feasible(child.chromosome, env_->batch)) continue;
        const double draw = rng_->uniform();
        if (draw > threshold && env_->budget.affords(mcts_cost(config_.mcts) + env_->batch.size())) {
            MctsOutcome out = mcts_search(*rep.image, *rep.reference, rep.label, ctx, env_->evaluator->grid(),
                                          snapshot, config_.mcts, *rng_);
            env_->budget.spend(out.forwards);
            state.totals.forwards += out.forwards;
            state.totals.mutants += out.mutants;
            state.totals.adversarial += out.adversarial;
            merge_into(explored, out.explored);
            if (env_->mcts_trace)
                env_->mcts_trace->insert(env_->mcts_trace->end(), out.trace.begin(), out.trace.end());
            if (out.gain.sum() > 0.0)
                found.push_back({std::move(out.image), 0, out.label, out.label != rep.label,
                                 bits_not_in(out.explored, snapshot).total()});
            if (out.first_adversarial)
                found.push_back({std::move(out.first_adversarial->first), 0, out.first_adversarial->second, true, 0});
            child.chromosome = std::move(out.chromosome);
            ++row.repairs;
        } else {
            // Infeasible and not repaired: replaced to keep the population size.
            const std::size_t id = child.id;
            child = fresh(state);
            child.id = id;
            ++row.refills;
        }
    }

    const std::size_t committed = bits_not_in(explored, *env_->global).total();
    merge_into(*env_->global, explored);
    if (committed > 0) state.item_bits[0] += committed;
    for (auto& t : found) state.tests.push_back(std::move(t));
}

void EvolutionEngine::run_generation_spea2(EvolutionState& state) {
    GenerationLog row;
    row.generation = state.generation;
    const std::size_t forwards_before = state.totals.forwards;
    evaluate_pending(state, state.population);
    std::size_t feasible = 0;
    for (const auto& ind : state.population) feasible += ind.feasible ? 1 : 0;
    row.feasible_fraction = state.population.empty() ? 0.0 : double(feasible) / double(state.population.size());

    // Archive members keep lower ids than the newer population, so the union is in id order.
    std::vector<Individual> pool = state.archive;
    pool.insert(pool.end(), state.population.begin(), state.population.end());
    const auto objs = objectives_of(pool);
    const Spea2Fitness fit = spea2_fitness(objs);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i].fitness = fit.fitness[i];

    std::vector<Individual> next;
    if (algorithm_ == SearchAlgorithm::Spea2Decomposition) {
        const DecompositionSelection sel = decomposition_select(objs, state.weights, state.ideal, config_.archive);
        state.assignment.clear();
        for (std::size_t i : sel.selected) {
            next.push_back(pool[i]);
            state.assignment.push_back(sel.assignment[i]);
        }
    } else {
        for (std::size_t i : spea2_truncation_select(objs, fit.fitness, config_.archive)) next.push_back(pool[i]);
    }
    state.archive = std::move(next);
    update_best(state, state.archive);
    row.best = state.best;
    row.archive_size = state.archive.size();

    // Decomposition mode mates from the archive together with the population.
    const std::vector<Individual>& parents =
        algorithm_ == SearchAlgorithm::Spea2Decomposition ? pool : state.archive;
    std::vector<Individual> children = offspring(state, parents.empty() ? pool : parents, true);
    if (algorithm_ == SearchAlgorithm::Spea2Mcts) repair(state, children, row);
    state.population = std::move(children);
    row.forwards = state.totals.forwards - forwards_before;
    state.log.push_back(row);
    ++state.generation;
}

void EvolutionEngine::run_generation_nsga3(EvolutionState& state) {
    GenerationLog row;
    row.generation = state.generation;
    const std::size_t forwards_before = state.totals.forwards;
    evaluate_pending(state, state.population);
    std::size_t feasible = 0;
    for (const auto& ind : state.population) feasible += ind.feasible ? 1 : 0;
    row.feasible_fraction = state.population.empty() ? 0.0 : double(feasible) / double(state.population.size());

    // The archive holds the current parents; survivors come from parents and offspring.
    std::vector<Individual> pool = state.archive;
    pool.insert(pool.end(), state.population.begin(), state.population.end());
    const auto objs = objectives_of(pool);
    std::vector<Individual> next;
    for (std::size_t i : nsga3_select(objs, state.weights, std::min(config_.population, pool.size())))
        next.push_back(pool[i]);
    state.archive = std::move(next);
    update_best(state, state.archive);
    row.best = state.best;
    row.archive_size = state.archive.size();

    state.population = offspring(state, state.archive, false);
    row.forwards = state.totals.forwards - forwards_before;
    state.log.push_back(row);
    ++state.generation;
}

void EvolutionEngine::run_generation(EvolutionState& state) {
    if (algorithm_ == SearchAlgorithm::Nsga3)
        run_generation_nsga3(state);
    else
        run_generation_spea2(state);
}

void EvolutionEngine::run(EvolutionState& state) {
    for (std::size_t g = 0; g < config_.iterations && !state.budget_exhausted; ++g) run_generation(state);
}

namespace {

SearchOutcome run_random_mutation(const SearchConfig& config, SearchEnvironment& env, Rng& rng) {
    SearchOutcome out;
    out.item_bits.assign(env.batch.size(), 0);
    ForwardBudget& budget = env.budget;
    if (budget.unlimited()) budget.limit = config.natural_budget(env.batch.size());
    const MutationContext ctx = env.evaluator->context();
    const std::size_t guard = 64 * env.batch.size();
    std::size_t idle = 0;
    for (std::size_t cursor = 0; !budget.exhausted() && idle < guard; ++cursor) {
        const std::size_t i = cursor % env.batch.size();
        const BatchItem& item = env.batch[i];
        const std::size_t steps = std::min(config.mutation_max_steps, budget.remaining());
        MutationSequence seq = mutate_sequence(*item.image, *item.reference, ctx, env.evaluator->grid(),
                                               *env.global, steps, rng);
        idle = seq.forwards == 0 ? idle + 1 : 0;
        budget.spend(seq.forwards);
        out.totals.forwards += seq.forwards;
        out.totals.mutants += seq.mutants.size();

        std::size_t best = seq.mutants.size();
        bool adversarial_kept = false;
        for (std::size_t j = 0; j < seq.mutants.size(); ++j) {
            const std::size_t bits = seq.gains[j].total();
            out.item_bits[i] += bits;
            if (bits > 0 && (best == seq.mutants.size() || bits > seq.gains[best].total())) best = j;
            if (seq.labels[j] != item.label) {
                ++out.totals.adversarial;
                if (!adversarial_kept && j != best) {
                    out.tests.push_back({seq.mutants[j], i, seq.labels[j], true, 0});
                    adversarial_kept = true;
                }
            }
        }
        if (best < seq.mutants.size())
            out.tests.push_back({std::move(seq.mutants[best]), i, seq.labels[best], seq.labels[best] != item.label,
                                 seq.gains[best].total()});
    }
    return out;
}

SearchOutcome run_mcts_only(const SearchConfig& config, SearchEnvironment& env, Rng& rng) {
    SearchOutcome out;
    out.item_bits.assign(env.batch.size(), 0);
    ForwardBudget& budget = env.budget;
    if (budget.unlimited()) budget.limit = config.natural_budget(env.batch.size());
    const MutationContext ctx = env.evaluator->context();
    const std::size_t guard = 4 * env.batch.size();
    std::size_t idle = 0;
    for (std::size_t cursor = 0; budget.affords(mcts_cost(config.mcts)) && idle < guard; ++cursor) {
        const std::size_t i = cursor % env.batch.size();
        const BatchItem& item = env.batch[i];
        MctsOutcome m = mcts_search(*item.image, *item.reference, item.label, ctx, env.evaluator->grid(),
                                    *env.global, config.mcts, rng);
        idle = m.forwards == 0 ? idle + 1 : 0;
        budget.spend(m.forwards);
        out.totals.forwards += m.forwards;
        out.totals.mutants += m.mutants;
        out.totals.adversarial += m.adversarial;
        if (env.mcts_trace) env.mcts_trace->insert(env.mcts_trace->end(), m.trace.begin(), m.trace.end());
        const std::size_t committed = bits_not_in(m.explored, *env.global).total();
        merge_into(*env.global, m.explored);
        out.item_bits[i] += committed;
        if (m.gain.sum() > 0.0 && committed > 0)
            out.tests.push_back({std::move(m.image), i, m.label, m.label != item.label, committed});
        if (m.first_adversarial)
            out.tests.push_back({std::move(m.first_adversarial->first), i, m.first_adversarial->second, true, 0});
    }
    return out;
}

}  // namespace

SearchOutcome run_search(SearchAlgorithm algorithm, const SearchConfig& config, SearchEnvironment& env,
                         Rng& rng) {
    config.validate();
    if (!env.evaluator || !env.global) throw Error(ErrorCode::Invariant, "search environment incomplete");
    if (env.batch.empty()) return {};
    if (algorithm == SearchAlgorithm::RandomMutation) return run_random_mutation(config, env, rng);
    if (algorithm == SearchAlgorithm::MctsOnly) return run_mcts_only(config, env, rng);

    // Evaluations paste precomputed region mutations instead of re-applying them.
    const PreparedBatch prepared = env.evaluator->prepare(env.batch);
    const std::span<const BatchItem> original = env.batch;
    env.batch = prepared.items;
    EvolutionState state;
    try {
        EvolutionEngine engine(algorithm, config, env, rng);
        state = engine.initialize();
        engine.run(state);
    } catch (...) {
        env.batch = original;
        throw;
    }
    env.batch = original;
    SearchOutcome out;
    out.totals = state.totals;
    out.tests = std::move(state.tests);
    out.item_bits = std::move(state.item_bits);
    out.generations = std::move(state.log);
    out.best = state.best;
    return out;
}

}  // namespace covfuzz
