#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "covfuzz/chromosome.hpp"
#include "covfuzz/coverage.hpp"
#include "covfuzz/error.hpp"
#include "covfuzz/mutation.hpp"
#include "covfuzz/random.hpp"

namespace covfuzz {

struct MctsParams {
    std::size_t rollouts = 64;
    double uct_c = 1.4142135623730951;
    /// Tree depth in plies; every (region, op) pair takes two.
    std::size_t max_depth = 6;
    bool record_trace = false;

    void validate() const {
        if (rollouts < 1) throw Error(ErrorCode::Config, "mcts rollouts must be >= 1");
        if (max_depth < 2 || max_depth % 2 != 0)
            throw Error(ErrorCode::Config, "mcts max_depth must be even and >= 2");
        if (!(uct_c >= 0.0) || !std::isfinite(uct_c)) throw Error(ErrorCode::Config, "mcts uct_c must be >= 0");
    }
};

struct RolloutRecord {
    std::size_t depth = 0;
    double reward = 0.0;
};

struct ActionPair {
    std::size_t region = 0;
    std::size_t op = 0;
    bool operator==(const ActionPair&) const = default;
};

template <class State>
struct StepOutcome {
    State state;
    bool valid = false;
    double gain = 0.0;
};

/// UCT over a two-player game: even plies choose a region, odd plies choose
/// an operation for it. A Game provides
///
///   using State = ...;
///   State root();
///   std::size_t region_count() const;
///   std::size_t op_count() const;
///   StepOutcome<State> step(const State&, std::size_t region, std::size_t op);
///
/// A region is used at most once per path. A path continues only while its
/// steps stay valid and keep producing gain.
template <class Game>
class MctsTree {
public:
    using State = typename Game::State;

    struct Node {
        std::size_t parent = npos;
        std::size_t depth = 0;
        std::size_t action = 0;
        std::vector<std::size_t> actions;   // legal actions, ascending
        std::vector<std::size_t> children;  // expanded, same order as actions
        std::size_t visits = 0;
        double total_reward = 0.0;
        bool terminal = false;
        bool valid = true;
        double path_reward = 0.0;  // sum of step gains from the root
        std::optional<State> state;  // set on pair-completing nodes and the root
    };

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    MctsTree(Game& game, MctsParams params) : game_(&game), params_(params) {
        params_.validate();
        Node root;
        root.state = game_->root();
        root.actions = free_regions(npos);
        root.terminal = root.actions.empty();
        nodes_.push_back(std::move(root));
        best_reward_ = 0.0;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<RolloutRecord>& trace() const { return trace_; }
    std::size_t rollouts() const { return rollouts_; }
    double best_reward() const { return best_reward_; }
    const std::vector<ActionPair>& best_path() const { return best_path_; }
    /// State at the end of the best path (the root state if none improved on it).
    const State& best_state() const { return best_state_ ? *best_state_ : *nodes_[0].state; }

    /// Actions (region, op) along the path from the root to `node`, valid pairs only.
    std::vector<ActionPair> path_to(std::size_t node) const {
        std::vector<std::size_t> plies;
        for (std::size_t n = node; n != 0; n = nodes_[n].parent) plies.push_back(n);
        std::vector<ActionPair> out;
        for (auto it = plies.rbegin(); it != plies.rend(); ++it) {
            const Node& nd = nodes_[*it];
            if (nd.depth % 2 == 0 && nd.valid) out.push_back({nodes_[nd.parent].action, nd.action});
        }
        return out;
    }

    void rollout(Rng& rng) {
        std::size_t n = 0;
        while (!nodes_[n].terminal) {
            Node& node = nodes_[n];
            if (node.children.size() < node.actions.size()) {
                n = expand(n);
                break;
            }
            n = select_child(n);
        }

        // Random completion from the last state on the path.
        std::vector<ActionPair> path = path_to(n);
        double reward = nodes_[n].path_reward;
        std::size_t depth = nodes_[n].depth;
        std::optional<State> sim_state;
        const State* current = &last_state(n);
        std::vector<bool> used = used_regions(n);
        bool stop = nodes_[n].terminal;

        if (!stop && depth % 2 == 1) {
            // A region was chosen but no operation yet.
            const std::size_t region = nodes_[n].action;
            const std::size_t op = rng.below(game_->op_count());
            auto out = game_->step(*current, region, op);
            ++depth;
            if (!out.valid) {
                stop = true;
            } else {
                reward += out.gain;
                path.push_back({region, op});
                sim_state = std::move(out.state);
                current = &*sim_state;
                consider(path, reward, *current);
                stop = !(out.gain > 0.0);
            }
        }
        while (!stop && depth + 2 <= params_.max_depth) {
            std::vector<std::size_t> free;
            for (std::size_t r = 0; r < used.size(); ++r)
                if (!used[r]) free.push_back(r);
            if (free.empty()) break;
            const std::size_t region = free[rng.below(free.size())];
            const std::size_t op = rng.below(game_->op_count());
            used[region] = true;
            auto out = game_->step(*current, region, op);
            depth += 2;
            if (!out.valid) break;
            reward += out.gain;
            path.push_back({region, op});
            sim_state = std::move(out.state);
            current = &*sim_state;
            consider(path, reward, *current);
            if (!(out.gain > 0.0)) break;
        }

        if (reward > max_reward_) max_reward_ = reward;
        for (std::size_t m = n;; m = nodes_[m].parent) {
            ++nodes_[m].visits;
            nodes_[m].total_reward += reward;
            if (m == 0) break;
        }
        ++rollouts_;
        if (params_.record_trace) trace_.push_back({depth, reward});
    }

    void run(Rng& rng) {
        for (std::size_t i = 0; i < params_.rollouts; ++i) rollout(rng);
    }

private:
    std::vector<std::size_t> free_regions(std::size_t parent_of_new) const {
        std::vector<bool> used(game_->region_count(), false);
        if (parent_of_new != npos) used = used_regions(parent_of_new);
        std::vector<std::size_t> out;
        for (std::size_t r = 0; r < used.size(); ++r)
            if (!used[r]) out.push_back(r);
        return out;
    }

    std::vector<bool> used_regions(std::size_t node) const {
        std::vector<bool> used(game_->region_count(), false);
        for (std::size_t n = node; n != 0 && n != npos; n = nodes_[n].parent)
            if (nodes_[n].depth % 2 == 1) used[nodes_[n].action] = true;
        return used;
    }

    const State& last_state(std::size_t node) const {
        for (std::size_t n = node;; n = nodes_[n].parent) {
            if (nodes_[n].state && nodes_[n].valid) return *nodes_[n].state;
            if (n == 0) break;
        }
        return *nodes_[0].state;
    }

    std::size_t expand(std::size_t n) {
        const std::size_t action = nodes_[n].actions[nodes_[n].children.size()];
        Node child;
        child.parent = n;
        child.depth = nodes_[n].depth + 1;
        child.action = action;
        child.path_reward = nodes_[n].path_reward;
        if (child.depth % 2 == 1) {
            child.actions.resize(game_->op_count());
            for (std::size_t i = 0; i < child.actions.size(); ++i) child.actions[i] = i;
        } else {
            const std::size_t region = nodes_[n].action;
            auto out = game_->step(last_state(n), region, action);
            child.valid = out.valid;
            if (out.valid) {
                child.path_reward += out.gain;
                child.state = std::move(out.state);
            }
            const bool gained = out.valid && out.gain > 0.0;
            child.terminal = !gained || child.depth + 2 > params_.max_depth;
        }
        const std::size_t id = nodes_.size();
        nodes_.push_back(std::move(child));
        nodes_[n].children.push_back(id);
        if (nodes_[id].depth % 2 == 0) {
            if (!nodes_[id].terminal) {
                nodes_[id].actions = free_regions(id);
                if (nodes_[id].actions.empty()) nodes_[id].terminal = true;
            }
            if (nodes_[id].valid) consider(path_to(id), nodes_[id].path_reward, *nodes_[id].state);
        }
        return id;
    }

    std::size_t select_child(std::size_t n) const {
        const Node& node = nodes_[n];
        const double scale = max_reward_ > 0.0 ? max_reward_ : 1.0;
        const double log_parent = std::log(static_cast<double>(std::max<std::size_t>(node.visits, 1)));
        std::size_t best = node.children.front();
        double best_value = -std::numeric_limits<double>::infinity();
        for (std::size_t c : node.children) {
            const Node& ch = nodes_[c];
            const double visits = static_cast<double>(ch.visits);
            const double value = ch.visits == 0
                                     ? std::numeric_limits<double>::infinity()
                                     : (ch.total_reward / visits) / scale +
                                           params_.uct_c * std::sqrt(log_parent / visits);
            if (value > best_value) {
                best_value = value;
                best = c;
            }
        }
        return best;
    }

    void consider(const std::vector<ActionPair>& path, double reward, const State& state) {
        if (reward > best_reward_) {
            best_reward_ = reward;
            best_path_ = path;
            best_state_ = state;
        }
    }

    Game* game_;
    MctsParams params_;
    std::vector<Node> nodes_;
    std::vector<RolloutRecord> trace_;
    std::size_t rollouts_ = 0;
    double max_reward_ = 0.0;
    double best_reward_ = 0.0;
    std::vector<ActionPair> best_path_;
    std::optional<State> best_state_;
};

/// Game over one seed image: each step applies one operation to one region
/// and scores the coverage the cumulative mutant adds over a frozen snapshot.
class MutationGame {
public:
    struct State {
        Tensor image;
        CoverageState local;
        int label = 0;
    };

    MutationGame(const MutationContext& ctx, const RegionGrid& grid, const Tensor& seed,
                 const Tensor& reference, int seed_label, const CoverageState& snapshot);

    State root();
    std::size_t region_count() const { return grid_->size(); }
    std::size_t op_count() const { return kOperatorCount * ctx_->tables.levels(); }
    MutationOp decode(std::size_t op) const {
        return {static_cast<Operator>(op / ctx_->tables.levels()), op % ctx_->tables.levels()};
    }
    StepOutcome<State> step(const State& state, std::size_t region, std::size_t op);

    std::size_t forwards() const { return forwards_; }
    std::size_t mutants() const { return mutants_; }
    std::size_t adversarial() const { return adversarial_; }
    /// Union of the coverage of every valid state the search evaluated.
    const CoverageState& explored() const { return explored_; }
    /// First evaluated mutant whose prediction differs from the seed's.
    const std::optional<std::pair<Tensor, int>>& first_adversarial() const { return first_adversarial_; }

private:
    const MutationContext* ctx_;
    const RegionGrid* grid_;
    const Tensor* seed_;
    const Tensor* reference_;
    int seed_label_;
    const CoverageState* snapshot_;
    CoverageState explored_;
    std::size_t forwards_ = 0;
    std::size_t mutants_ = 0;
    std::size_t adversarial_ = 0;
    std::optional<std::pair<Tensor, int>> first_adversarial_;
};

struct MctsOutcome {
    /// Best path as a chromosome; all-zero mask when no valid gain was found.
    Chromosome chromosome;
    CoverageVector gain;
    std::vector<ActionPair> path;
    /// Mutant at the end of the best path and its predicted label.
    Tensor image;
    int label = 0;
    std::optional<std::pair<Tensor, int>> first_adversarial;
    CoverageState explored;
    std::size_t forwards = 0;
    std::size_t mutants = 0;
    std::size_t adversarial = 0;
    std::vector<RolloutRecord> trace;
};

MctsOutcome mcts_search(const Tensor& seed, const Tensor& reference, int seed_label,
                        const MutationContext& ctx, const RegionGrid& grid,
                        const CoverageState& snapshot, const MctsParams& params, Rng& rng);

/// Linear repair threshold schedule from c0 at generation 0 to c1 at the end.
double repair_threshold(std::size_t generation, std::size_t total_generations, double c0, double c1);

}  // namespace covfuzz
