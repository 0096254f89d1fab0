// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset, e.g. `acceptance 1 5 9`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "covfuzz/campaign.hpp"
#include "covfuzz/coverage.hpp"
#include "covfuzz/fixtures.hpp"
#include "covfuzz/mcts.hpp"
#include "covfuzz/model_io.hpp"
#include "covfuzz/mutation.hpp"
#include "covfuzz/pareto.hpp"
#include "covfuzz/sampling.hpp"
#include "test_support.hpp"

using namespace cftest;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// 1. incremental coverage vs from-scratch recomputation
Outcome coverage_oracle() {
    const Model m = generate_fixture_model("mini-lenet", 1);
    Rng rng(101);
    std::vector<Tensor> set;
    for (int i = 0; i < 50; ++i) set.push_back(random_image(m.input_shape(), rng));
    const NeuronProfile p = profile(m, set, 10);
    const std::size_t n = p.neuron_count();
    std::vector<std::vector<float>> traces;
    CoverageState s = CoverageState::empty_for(p);
    CoverageVector prev;
    std::size_t checks = 0;
    for (int t = 0; t < 1000; ++t) {
        // spread a little past the profiled range so both boundaries get hit
        std::vector<float> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = std::max(1e-3, static_cast<double>(p.high[i] - p.low[i]));
            v[i] = static_cast<float>(rng.uniform(p.low[i] - 0.3 * w, p.high[i] + 0.3 * w));
        }
        traces.push_back(std::move(v));
        update(s, p, traces.back());
        const CoverageVector now = measure(s);
        if (now.kmnc < prev.kmnc || now.nbc < prev.nbc || now.snac < prev.snac)
            return {false, fmt("coverage decreased at trace %d", t)};
        prev = now;
        if (t % 10 == 9 || t == 0) {
            ++checks;
            if (!same_bits(s, reference_coverage(p, traces)))
                return {false, fmt("bit mismatch after %d traces", t + 1)};
        }
    }
    return {true, fmt("%zu neurons, 1000 traces, %zu from-scratch comparisons, kmnc %.4f nbc %.4f snac %.4f", n,
                      checks, prev.kmnc, prev.nbc, prev.snac)};
}

// 2. SPEA2 F < 1 set vs brute-force front
Outcome pareto() {
    Rng rng(202);
    std::size_t points = 0;
    for (int c = 0; c < 200; ++c) {
        const auto pts = random_objectives(2 + rng.below(79), rng, c % 2 == 0);
        points += pts.size();
        const Spea2Fitness f = spea2_fitness(pts);
        std::vector<std::size_t> front;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (f.fitness[i] < 1.0) front.push_back(i);
        if (front != brute_force_front(pts)) return {false, fmt("population %d differs", c)};
    }
    return {true, fmt("200 populations, %zu points", points)};
}

double ray_distance(const Objectives& p, const Objectives& w) {
    double dot = 0.0, ww = 0.0;
    for (int i = 0; i < 3; ++i) {
        dot += p[i] * w[i];
        ww += w[i] * w[i];
    }
    double d2 = 0.0;
    for (int i = 0; i < 3; ++i) d2 += std::pow(p[i] - dot / ww * w[i], 2);
    return std::sqrt(d2);
}

// 3. decomposition archive, rechecked exhaustively
Outcome decomposition() {
    for (auto [h, n] : {std::pair<std::size_t, std::size_t>{1, 3}, {2, 6}, {7, 36}})
        if (generate_weight_vectors(h).size() != n) return {false, fmt("H=%zu gives wrong count", h)};
    Rng rng(303);
    const auto weights = generate_weight_vectors(7);
    std::size_t retained = 0;
    for (int c = 0; c < 100; ++c) {
        const auto pts = random_objectives(5 + rng.below(76), rng, c % 4 == 0);
        Objectives ideal{0, 0, 0};
        const auto r = decomposition_select(pts, weights, ideal, 40);
        Objectives z{0, 0, 0}, nadir{0, 0, 0};
        for (const auto& p : pts)
            for (int i = 0; i < 3; ++i) z[i] = std::min(z[i], p[i]);
        for (int i = 0; i < 3; ++i) {
            nadir[i] = z[i];
            for (const auto& p : pts) nadir[i] = std::max(nadir[i], p[i]);
            nadir[i] = std::max(nadir[i], z[i] + 1e-9);
        }
        std::vector<std::size_t> assign(pts.size());
        std::vector<double> dist(pts.size(), 1e300);
        for (std::size_t k = 0; k < pts.size(); ++k) {
            Objectives q;
            for (int i = 0; i < 3; ++i) q[i] = (nadir[i] - pts[k][i]) / (nadir[i] - z[i]);
            for (std::size_t w = 0; w < weights.size(); ++w) {
                const double d = ray_distance(q, weights[w]);
                if (d < dist[k] - 1e-12) {
                    dist[k] = d;
                    assign[k] = w;
                }
            }
            if (std::fabs(r.distance[k] - dist[k]) > 1e-9) return {false, fmt("union %d: distance differs", c)};
            if (std::fabs(ray_distance(r.normalized[k], weights[r.assignment[k]]) - dist[k]) > 1e-9)
                return {false, fmt("union %d: assignment not nearest", c)};
        }
        std::set<std::size_t> used;
        for (std::size_t m : r.selected) {
            const std::size_t w = r.assignment[m];
            if (!used.insert(w).second) return {false, fmt("union %d: two members in subspace %zu", c, w)};
            for (std::size_t o = 0; o < pts.size(); ++o) {
                if (r.assignment[o] != w) continue;
                if (dominates(pts[o], pts[m])) return {false, fmt("union %d: dominated member kept", c)};
                bool o_dominated = false;
                for (std::size_t q = 0; q < pts.size(); ++q)
                    if (r.assignment[q] == w && dominates(pts[q], pts[o])) o_dominated = true;
                if (!o_dominated && r.distance[m] > r.distance[o])
                    return {false, fmt("union %d: closer non-dominated member skipped", c)};
            }
        }
        retained += r.selected.size();
    }
    return {true, fmt("counts 3/6/36, 100 unions, %zu members rechecked", retained)};
}

// 4. sampling formulas
Outcome sampling() {
    std::size_t checked = 0;
    for (double a : {0.01, 0.1, 0.3, 1.0, 3.0})
        for (double b : {-10.0, -1.0, 0.0, 1.0, 10.0})
            for (std::size_t x = 0; x < 100; ++x) {
                const double now = p1(x, a, b), next = p1(x + 1, a, b);
                const double expect = 1.0 / (1.0 + std::exp(a * static_cast<double>(x) + b));
                if (std::fabs(now - expect) > 1e-15 * std::max(1.0, expect)) return {false, "p1 value"};
                // below double resolution the sequence can only stall at exactly 0
                if (next == 0.0) break;
                if (!(next < now)) return {false, fmt("p1 not decreasing at a=%g b=%g x=%zu", a, b, x)};
                ++checked;
            }
    Rng rng(404);
    for (int c = 0; c < 1000; ++c) {
        Seed s;
        s.fuzz_count = rng.below(60);
        s.last_gain = c % 3 == 0 ? 0.0 : rng.uniform() * 0.1;
        SamplerParams p;
        p.total = 1 + rng.below(32);
        p.circle = 0;
        if (selection_probability(s, p) != p1(s.fuzz_count, p.a, p.b)) return {false, "Circle=0 endpoint"};
        p.circle = p.total;
        const double gain = std::max(s.last_gain, 1e-6);
        const double raw = (1.0 + std::pow(double(p.total), 4) / std::pow(double(p.total), 3)) / std::sqrt(gain);
        if (selection_probability(s, p) != std::min(raw, 1.0)) return {false, "Circle=Total endpoint"};
        for (std::size_t circle = 0; circle <= p.total; ++circle) {
            p.circle = circle;
            const double v = selection_probability(s, p);
            if (!std::isfinite(v) || v <= 0.0 || v > 1.0) return {false, "probability out of (0, 1]"};
        }
    }
    return {true, fmt("%zu monotone steps on a 5x5 (a,b) grid, 1000 endpoint cases", checked)};
}

Tensor flat_image(float v) {
    Tensor t({10, 10, 1});
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

// 5. constraint truth table
Outcome constraint() {
    const ConstraintParams p{0.02, 0.2};
    const Tensor a = flat_image(100.0f);
    auto changed = [&](std::size_t count, float diff) {
        Tensor t = a;
        for (std::size_t i = 0; i < count; ++i) t.data[i] += diff;
        return t;
    };
    struct Case {
        const char* name;
        Tensor img;
        bool expect;
    };
    Tensor fifty = changed(50, 10.0f);
    fifty.data[0] = 160.0f;
    const std::vector<Case> cases{
        {"few changes, small max", changed(2, 5.0f), true},
        {"few changes, max 155", changed(1, 155.0f), true},
        {"many changes, max 50", changed(3, 50.0f), true},
        {"many changes, max 51", changed(3, 51.0f), false},
        {"1 changed pixel", changed(1, 60.0f), true},
        {"50 changed, max 60", fifty, false},
    };
    for (const auto& c : cases)
        if (check_constraint(a, c.img, p) != c.expect) return {false, c.name};
    // the L0 branch without L-infinity limit still rejects changes beyond the pixel range
    if (!constraint_holds(1, 255.0, 100, p) || constraint_holds(1, 255.5, 100, p))
        return {false, "few-changes branch bound"};
    if (!constraint_holds(2, 50.99, 100, p) || constraint_holds(2, 51.0, 100, p))
        return {false, "many-changes boundary"};
    return {true, "4 branch combinations + worked cases"};
}

// 6. MCTS on enumerable toy games
Outcome mcts() {
    Rng games(606);
    int optimal = 0;
    for (int run = 0; run < 100; ++run) {
        ToyGame game = random_toy_game(2, 3, games);
        const double best = exhaustive_best(game, 4);
        MctsParams p;
        p.rollouts = 500;
        p.max_depth = 4;
        MctsTree<ToyGame> tree(game, p);
        Rng rng(6000 + run);
        tree.run(rng);
        optimal += std::fabs(tree.best_reward() - best) < 1e-12;
    }
    return {optimal >= 95, fmt("optimal in %d/100 runs (need 95)", optimal)};
}

CampaignConfig default_campaign(std::uint64_t seed) {
    CampaignConfig c;
    c.rng_seed = seed;
    c.search_config.workers = worker_count();
    return c;
}

// 7. frequency vs random seed sampling at equal budget
Outcome sampling_direction() {
    int wins = 0;
    std::string runs;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        double kmnc[2];
        for (int arm = 0; arm < 2; ++arm) {
            CampaignConfig c = default_campaign(s);
            c.sampling = arm == 0 ? SamplingStrategy::Frequency : SamplingStrategy::Random;
            c.batch_budgets.assign(c.batches, 10240);
            kmnc[arm] = run_campaign(c).final_coverage.kmnc;
        }
        wins += kmnc[0] >= kmnc[1];
        runs += fmt(" %.4f/%.4f", kmnc[0], kmnc[1]);
        std::fprintf(stderr, "  [7] seed %llu: frequency %.4f random %.4f\n", static_cast<unsigned long long>(s),
                     kmnc[0], kmnc[1]);
    }
    return {wins >= 7, fmt("frequency >= random in %d/10 (need 7);", wins) + runs};
}

// 8. spea2-mcts vs pure random mutation at equal budget
Outcome search_direction() {
    int wins = 0;
    std::string runs;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        const CampaignConfig c = default_campaign(s);
        const CampaignReport a = run_campaign(c);
        CampaignConfig d = c;
        d.search = SearchAlgorithm::RandomMutation;
        for (const auto& b : a.batches) d.batch_budgets.push_back(b.forwards);
        const CampaignReport r = run_campaign(d);
        if (r.forwards.search > a.forwards.search) return {false, "random mutation overspent its budget"};
        wins += a.final_coverage.kmnc >= r.final_coverage.kmnc;
        runs += fmt(" %.4f/%.4f", a.final_coverage.kmnc, r.final_coverage.kmnc);
        std::fprintf(stderr, "  [8] seed %llu: spea2-mcts %.4f random-mutation %.4f (%zu forwards)\n",
                     static_cast<unsigned long long>(s), a.final_coverage.kmnc, r.final_coverage.kmnc,
                     a.forwards.search);
    }
    return {wins >= 7, fmt("spea2-mcts >= random mutation in %d/10 (need 7);", wins) + runs};
}

// 9. adversarial counting on the two-class linear model
Outcome adversarial() {
    const double threshold = 0.5;
    const Model model = linear_two_class_model(10, threshold);
    const RegionGrid grid = RegionGrid::for_image(10, 10);
    const MutationTables tables;
    const ConstraintParams constraint;
    Rng rng(909);
    std::vector<int> src;
    std::vector<ActivationTrace> traces;
    std::size_t expected = 0, rejected = 0;
    auto margin = [&](const Tensor& img) {
        double sum = 0.0;
        for (float v : img.data) sum += v;
        return sum / static_cast<double>(img.size()) / 255.0 - threshold;
    };
    while (traces.size() < 5000) {
        const double centre = 105.0 + 45.0 * rng.uniform();
        Tensor seed = random_image(model.input_shape(), rng, centre - 25.0, centre + 25.0);
        for (float& v : seed.data) v = std::round(v);
        // one or two stacked region edits
        Tensor mutant = seed;
        for (std::size_t step = 0, steps = 1 + rng.below(2); step < steps; ++step)
            apply_in_place(mutant, grid.region(rng.below(grid.size())),
                           {static_cast<Operator>(rng.below(kOperatorCount)), rng.below(tables.levels())}, tables);
        if (!check_constraint(seed, mutant, constraint)) {
            ++rejected;
            continue;
        }
        const double m0 = margin(seed), m1 = margin(mutant);
        if (std::fabs(m0) < 1e-5 || std::fabs(m1) < 1e-5) continue;  // too close to call in float
        const int before = m0 > 0.0, after = m1 > 0.0;
        if (forward(model, seed).predicted_label != before) return {false, "seed label disagrees with margin"};
        expected += before != after;
        src.push_back(before);
        traces.push_back(forward(model, mutant));
        if (before != after && !check_constraint(seed, mutant, constraint))
            return {false, "adversarial mutant breaks the constraint"};
    }
    const AdversarialCount got = count_adversarial(src, traces);
    return {got.count == expected, fmt("counted %zu, analytic %zu of 5000 mutants (%zu rejected by the constraint)",
                                       got.count, expected, rejected)};
}

// 10. same seed, same report.json bytes
Outcome determinism() {
    std::string details;
    for (SearchAlgorithm s : {SearchAlgorithm::Spea2Mcts, SearchAlgorithm::Spea2Decomposition, SearchAlgorithm::Nsga3,
                              SearchAlgorithm::RandomMutation, SearchAlgorithm::MctsOnly}) {
        CampaignConfig c;
        c.search = s;
        c.sampling = s == SearchAlgorithm::Nsga3 ? SamplingStrategy::Clustered : SamplingStrategy::Frequency;
        c.rng_seed = 10;
        c.batches = 4;
        c.synthetic_count = 1200;
        c.search_config.iterations = 10;
        c.search_config.workers = worker_count();
        TempDir a("accept"), b("accept");
        emit_report(run_campaign(c), a.path());
        c.search_config.workers = 1;
        CampaignReport second = run_campaign(c);
        second.config.search_config.workers = worker_count();
        emit_report(second, b.path());
        if (read_file(a.path() / "report.json") != read_file(b.path() / "report.json"))
            return {false, to_string(s) + " reports differ"};
    }
    return {true, "5 search algorithms, byte-identical report.json (also across worker counts)"};
}

void randomize(LayerSpec& l, Rng& rng) {
    for (float& w : l.weights) w = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (float& b : l.bias) b = static_cast<float>(rng.uniform(-1.0, 1.0));
}

// 11. every layer kind vs the scalar reference
Outcome inference() {
    struct Kind {
        const char* name;
        LayerSpec spec;
        Shape in;
    };
    const std::vector<Kind> kinds{
        {"dense", LayerSpec::dense(13, 9, Activation::Relu, true), {13}},
        {"dense-linear", LayerSpec::dense(20, 10, Activation::None, true), {20}},
        {"conv2d", LayerSpec::conv2d(3, 3, 2, 4, 1, Activation::Relu, true), {8, 7, 2}},
        {"conv2d-5x5", LayerSpec::conv2d(5, 5, 1, 6, 1, Activation::Relu, true), {12, 12, 1}},
        {"conv2d-stride2", LayerSpec::conv2d(3, 2, 3, 6, 2, Activation::None, true), {9, 8, 3}},
        {"maxpool2d", LayerSpec::maxpool2d(2, 2), {8, 6, 3}},
        {"relu", LayerSpec::relu(true), {5, 4, 2}},
        {"flatten", LayerSpec::flatten(), {3, 4, 2}},
        {"softmax", LayerSpec::softmax(), {10}},
    };
    Rng rng(1111);
    double worst = 0.0;
    for (const auto& k : kinds) {
        for (int c = 0; c < 100; ++c) {
            LayerSpec l = k.spec;
            randomize(l, rng);
            const Model m = single_layer_model(l, k.in);
            const Tensor x = random_image(k.in, rng, -2.0, 2.0);
            const ActivationTrace t = forward(m, x);
            const std::vector<float>& got = m.layers()[0].traced ? t.values : t.logits;
            const auto ref = reference_layer(l, k.in, {x.data.begin(), x.data.end()});
            if (got.size() != ref.size()) return {false, std::string(k.name) + " size"};
            for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::fabs(ref[i] - got[i]));
        }
        if (worst > 1e-5) return {false, fmt("%s: error %.3g", k.name, worst)};
    }
    const std::size_t neurons = generate_fixture_model("mini-lenet", 1).neuron_count();
    return {neurons == 2330, fmt("9 layer configurations x 100 cases, worst |d| %.2g; mini-lenet %zu neurons", worst,
                                 neurons)};
}

// 12. the default campaign of criterion 8, timed
Outcome end_to_end() {
    const auto t0 = std::chrono::steady_clock::now();
    const CampaignReport r = run_campaign(default_campaign(1));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {secs < 600.0, fmt("%zu x %zu spea2-mcts campaign in %.1f s on %zu hardware threads (limit 600 s), "
                              "kmnc %.4f -> %.4f",
                              r.config.batches, r.config.batch_size, secs, worker_count(), r.initial.kmnc,
                              r.final_coverage.kmnc)};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double time_limit;  // seconds; 0 = none
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "coverage-oracle", coverage_oracle, 30.0},
        {2, "pareto-front", pareto, 10.0},
        {3, "decomposition-archive", decomposition, 0.0},
        {4, "sampling-formulas", sampling, 0.0},
        {5, "constraint-truth-table", constraint, 0.0},
        {6, "mcts-toy-games", mcts, 20.0},
        {7, "sampling-direction", sampling_direction, 300.0},
        {8, "search-direction", search_direction, 480.0},
        {9, "adversarial-count", adversarial, 0.0},
        {10, "determinism", determinism, 0.0},
        {11, "inference-oracle", inference, 0.0},
        {12, "end-to-end-budget", end_to_end, 0.0},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.time_limit > 0.0 && secs >= c.time_limit) {
            o.pass = false;
            o.detail += fmt(" [over the %.0f s limit]", c.time_limit);
        }
        std::printf("criterion %2d %-24s %s  %.1fs  %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs,
                    o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
