#include "covfuzz/mcts.hpp"

namespace covfuzz {

MutationGame::MutationGame(const MutationContext& ctx, const RegionGrid& grid, const Tensor& seed,
                           const Tensor& reference, int seed_label, const CoverageState& snapshot)
    : ctx_(&ctx),
      grid_(&grid),
      seed_(&seed),
      reference_(&reference),
      seed_label_(seed_label),
      snapshot_(&snapshot),
      explored_(snapshot.neurons, snapshot.k) {}

MutationGame::State MutationGame::root() {
    return {*seed_, CoverageState(snapshot_->neurons, snapshot_->k), seed_label_};
}

StepOutcome<MutationGame::State> MutationGame::step(const State& state, std::size_t region,
                                                    std::size_t op) {
    StepOutcome<State> out;
    out.state.image = apply(state.image, grid_->region(region), decode(op), ctx_->tables);
    if (!check_constraint(*reference_, out.state.image, ctx_->constraint)) return out;
    out.valid = true;
    out.state.local = state.local;
    out.state.label = state.label;
    if (out.state.image == state.image) return out;  // nothing changed, nothing to score

    const ActivationTrace trace = forward(*ctx_->model, out.state.image);
    ++forwards_;
    ++mutants_;
    out.state.label = trace.predicted_label;
    if (trace.predicted_label != seed_label_) {
        ++adversarial_;
        if (!first_adversarial_) first_adversarial_.emplace(out.state.image, trace.predicted_label);
    }
    update(explored_, *ctx_->profile, trace.values);
    const CoverageDelta delta = update_against(out.state.local, *snapshot_, *ctx_->profile, trace.values);
    out.gain = to_fractions(delta, snapshot_->neurons, snapshot_->k).sum();
    return out;
}

MctsOutcome mcts_search(const Tensor& seed, const Tensor& reference, int seed_label,
                        const MutationContext& ctx, const RegionGrid& grid,
                        const CoverageState& snapshot, const MctsParams& params, Rng& rng) {
    MutationGame game(ctx, grid, seed, reference, seed_label, snapshot);
    MctsTree<MutationGame> tree(game, params);
    tree.run(rng);

    MctsOutcome out;
    out.chromosome = Chromosome(grid.size());
    out.path = tree.best_path();
    for (const auto& [region, op] : out.path) {
        const MutationOp m = game.decode(op);
        out.chromosome.mask[region] = 1;
        out.chromosome.operators[region] = static_cast<std::uint8_t>(m.op);
        out.chromosome.levels[region] = static_cast<std::uint8_t>(m.level);
    }
    const auto& best = tree.best_state();
    out.image = best.image;
    out.label = best.label;
    out.first_adversarial = game.first_adversarial();
    out.gain = gain_over(best.local, snapshot);
    out.explored = game.explored();
    out.forwards = game.forwards();
    out.mutants = game.mutants();
    out.adversarial = game.adversarial();
    out.trace = tree.trace();
    return out;
}

double repair_threshold(std::size_t generation, std::size_t total_generations, double c0, double c1) {
    if (!(c0 >= 0.0 && c0 <= c1 && c1 <= 1.0))
        throw Error(ErrorCode::Config, "repair threshold needs 0 <= c0 <= c1 <= 1");
    if (generation > total_generations)
        throw Error(ErrorCode::Config, "generation beyond total generations");
    if (total_generations == 0) return c0;
    return c0 + (c1 - c0) * static_cast<double>(generation) / static_cast<double>(total_generations);
}

}  // namespace covfuzz
