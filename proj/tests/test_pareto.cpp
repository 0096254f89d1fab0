#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "covfuzz/pareto.hpp"
#include "test_support.hpp"

using namespace cftest;

namespace {

Objectives neg(double a, double b, double c) { return {-a, -b, -c}; }

std::vector<std::size_t> spea2_front(const std::vector<Objectives>& pts) {
    const Spea2Fitness f = spea2_fitness(pts);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (f.fitness[i] < 1.0) out.push_back(i);
    return out;
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

}  // namespace

TEST(Dominance, Basics) {
    EXPECT_TRUE(dominates({0, 0, 0}, {0, 0, 1}));
    EXPECT_FALSE(dominates({0, 0, 0}, {0, 0, 0}));
    EXPECT_FALSE(dominates({0, 1, 0}, {1, 0, 0}));
}

TEST(Spea2Fitness, ThreePointExample) {
    const std::vector<Objectives> pts{neg(0.5, 0.5, 0.5), neg(0.6, 0.6, 0.6), neg(0.4, 0.7, 0.5)};
    const Spea2Fitness f = spea2_fitness(pts);
    EXPECT_EQ(f.strength, (std::vector<std::size_t>{0, 1, 0}));
    EXPECT_EQ(f.raw, (std::vector<double>{1, 0, 0}));
    EXPECT_EQ(spea2_front(pts), (std::vector<std::size_t>{1, 2}));
    for (double d : f.density) {
        EXPECT_GT(d, 0.0);
        EXPECT_LE(d, 0.5);
    }
}

TEST(Spea2Fitness, IdenticalPointsAreAllNonDominated) {
    const std::vector<Objectives> pts(7, neg(0.2, 0.3, 0.1));
    const Spea2Fitness f = spea2_fitness(pts);
    for (double r : f.raw) EXPECT_EQ(r, 0.0);
    EXPECT_EQ(spea2_front(pts).size(), 7u);
}

TEST(Spea2Fitness, DensityUsesKthNeighbour) {
    // four points on a line; k = floor(sqrt(4)) = 2
    const std::vector<Objectives> pts{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}, {7, 0, 0}};
    const Spea2Fitness f = spea2_fitness(pts);
    EXPECT_DOUBLE_EQ(f.density[0], 1.0 / (3.0 + 2.0));
    EXPECT_DOUBLE_EQ(f.density[3], 1.0 / (6.0 + 2.0));
}

TEST(Spea2Fitness, FrontMatchesBruteForce) {
    Rng rng(21);
    for (int c = 0; c < 200; ++c) {
        const auto pts = random_objectives(2 + rng.below(79), rng, c % 2 == 0);
        ASSERT_EQ(spea2_front(pts), brute_force_front(pts)) << "case " << c;
    }
}

TEST(Spea2Truncation, KeepsFrontAndRespectsCapacity) {
    Rng rng(5);
    for (int c = 0; c < 100; ++c) {
        const auto pts = random_objectives(10 + rng.below(60), rng, c % 3 == 0);
        const Spea2Fitness f = spea2_fitness(pts);
        const std::size_t cap = 5 + rng.below(30);
        const auto sel = spea2_truncation_select(pts, f.fitness, cap);
        const auto front = brute_force_front(pts);
        EXPECT_EQ(sel.size(), std::min(cap, pts.size()));
        EXPECT_TRUE(std::is_sorted(sel.begin(), sel.end()));
        const std::set<std::size_t> chosen(sel.begin(), sel.end());
        if (front.size() <= cap) {
            for (std::size_t i : front) EXPECT_TRUE(chosen.count(i));
            // fill uses the best dominated fitness values
            double worst_in = 0.0, best_out = 1e300;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (chosen.count(i))
                    worst_in = std::max(worst_in, f.fitness[i]);
                else
                    best_out = std::min(best_out, f.fitness[i]);
            }
            EXPECT_LE(worst_in, best_out);
        } else {
            for (std::size_t i : sel) EXPECT_LT(f.fitness[i], 1.0);
        }
    }
}

TEST(Spea2Truncation, SmallNonDominatedUnionKeptWhole) {
    const std::vector<Objectives> pts{neg(1, 0, 0), neg(0, 1, 0), neg(0, 0, 1)};
    const Spea2Fitness f = spea2_fitness(pts);
    EXPECT_EQ(spea2_truncation_select(pts, f.fitness, 40), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Spea2Truncation, RemovesMostCrowded) {
    // Two near-duplicates in the middle of a front; one of them must go.
    const std::vector<Objectives> pts{{0, 1, 0.5}, {0.5, 0.5, 0.5}, {0.5001, 0.4999, 0.5}, {1, 0, 0.5}};
    const Spea2Fitness f = spea2_fitness(pts);
    const auto sel = spea2_truncation_select(pts, f.fitness, 3);
    EXPECT_TRUE(std::count(sel.begin(), sel.end(), 0) && std::count(sel.begin(), sel.end(), 3));
}

TEST(WeightVectors, Counts) {
    for (auto [h, n] : {std::pair<std::size_t, std::size_t>{1, 3}, {2, 6}, {7, 36}, {12, 91}}) {
        const auto w = generate_weight_vectors(h);
        EXPECT_EQ(w.size(), n);
        std::set<Objectives> unique(w.begin(), w.end());
        EXPECT_EQ(unique.size(), n);
        for (const auto& v : w) {
            EXPECT_NEAR(v[0] + v[1] + v[2], 1.0, 1e-12);
            for (double x : v) EXPECT_GE(x, 0.0);
        }
    }
    const auto h1 = generate_weight_vectors(1);
    const std::set<Objectives> units{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    EXPECT_EQ(std::set<Objectives>(h1.begin(), h1.end()), units);
    const auto h2 = generate_weight_vectors(2);
    EXPECT_NE(std::find(h2.begin(), h2.end(), Objectives{0.5, 0.5, 0.0}), h2.end());
}

TEST(Decomposition, AxisAligned) {
    const auto w = generate_weight_vectors(1);
    const std::vector<Objectives> pts{neg(0.9, 0.1, 0.1), neg(0.1, 0.9, 0.1), neg(0.1, 0.1, 0.9)};
    Objectives ideal{0, 0, 0};
    const auto r = decomposition_select(pts, w, ideal, 40);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1, 2}));
    std::set<std::size_t> used(r.assignment.begin(), r.assignment.end());
    EXPECT_EQ(used.size(), 3u);
}

TEST(Decomposition, IdealTightens) {
    Objectives ideal{0, 0, 0};
    const auto w = generate_weight_vectors(2);
    decomposition_select(std::vector<Objectives>{neg(0.2, 0.1, 0.3)}, w, ideal, 10);
    EXPECT_EQ(ideal, neg(0.2, 0.1, 0.3));
    decomposition_select(std::vector<Objectives>{neg(0.1, 0.5, 0.1)}, w, ideal, 10);
    EXPECT_EQ(ideal, neg(0.2, 0.5, 0.3));
}

TEST(Decomposition, ExhaustiveRecheck) {
    Rng rng(77);
    const auto weights = generate_weight_vectors(7);
    for (int c = 0; c < 100; ++c) {
        const auto pts = random_objectives(5 + rng.below(76), rng, c % 4 == 0);
        Objectives ideal{0, 0, 0};
        const auto r = decomposition_select(pts, weights, ideal, 40);

        // Recompute normalisation and assignment from scratch.
        Objectives z{0, 0, 0}, nadir{0, 0, 0};
        for (const auto& p : pts)
            for (int i = 0; i < 3; ++i) z[i] = std::min(z[i], p[i]);
        for (int i = 0; i < 3; ++i) {
            nadir[i] = z[i];
            for (const auto& p : pts) nadir[i] = std::max(nadir[i], p[i]);
            nadir[i] = std::max(nadir[i], z[i] + 1e-9);
        }
        std::vector<std::size_t> assign(pts.size());
        std::vector<double> dist(pts.size());
        for (std::size_t n = 0; n < pts.size(); ++n) {
            Objectives q;
            for (int i = 0; i < 3; ++i) q[i] = (nadir[i] - pts[n][i]) / (nadir[i] - z[i]);
            dist[n] = 1e300;
            for (std::size_t w = 0; w < weights.size(); ++w) {
                const double d = ray_distance(q, weights[w]);
                if (d < dist[n] - 1e-12) {
                    dist[n] = d;
                    assign[n] = w;
                }
            }
        }
        ASSERT_EQ(ideal, z);
        for (std::size_t n = 0; n < pts.size(); ++n) {
            ASSERT_NEAR(r.distance[n], dist[n], 1e-9);
            ASSERT_NEAR(ray_distance(r.normalized[n], weights[r.assignment[n]]), dist[n], 1e-9);
        }

        std::set<std::size_t> subspaces;
        for (std::size_t m : r.selected) {
            const std::size_t w = r.assignment[m];
            EXPECT_TRUE(subspaces.insert(w).second) << "two members in one subspace";
            for (std::size_t o = 0; o < pts.size(); ++o) {
                if (r.assignment[o] != w) continue;
                EXPECT_FALSE(dominates(pts[o], pts[m]));
                bool o_dominated = false;
                for (std::size_t p = 0; p < pts.size(); ++p)
                    if (r.assignment[p] == w && dominates(pts[p], pts[o])) o_dominated = true;
                if (!o_dominated) { EXPECT_LE(r.distance[m], r.distance[o]); }
            }
        }
        // Every subspace with candidates keeps one member (capacity 40 >= 36 vectors).
        std::set<std::size_t> populated(r.assignment.begin(), r.assignment.end());
        EXPECT_EQ(subspaces, populated);
    }
}

TEST(Decomposition, CapacityRespected) {
    Rng rng(8);
    const auto weights = generate_weight_vectors(7);
    for (int c = 0; c < 20; ++c) {
        const auto pts = random_objectives(80, rng, false);
        Objectives ideal{0, 0, 0};
        EXPECT_LE(decomposition_select(pts, weights, ideal, 10).selected.size(), 10u);
    }
}

TEST(NondominatedSort, FrontsAreLayered) {
    Rng rng(2);
    for (int c = 0; c < 50; ++c) {
        const auto pts = random_objectives(30, rng, c % 2 == 1);
        const auto fronts = nondominated_sort(pts);
        ASSERT_FALSE(fronts.empty());
        EXPECT_EQ(fronts[0], brute_force_front(pts));
        std::size_t total = 0;
        for (std::size_t f = 0; f < fronts.size(); ++f) {
            total += fronts[f].size();
            for (std::size_t a : fronts[f])
                for (std::size_t b : fronts[f]) EXPECT_FALSE(dominates(pts[a], pts[b]));
            if (f > 0)
                for (std::size_t a : fronts[f]) {
                    bool dominated = false;
                    for (std::size_t b : fronts[f - 1]) dominated |= dominates(pts[b], pts[a]);
                    EXPECT_TRUE(dominated);
                }
        }
        EXPECT_EQ(total, pts.size());
    }
}

TEST(Nsga3, SelectsFirstFrontFirst) {
    Rng rng(4);
    const auto refs = generate_weight_vectors(7);
    for (int c = 0; c < 30; ++c) {
        const auto pts = random_objectives(60, rng, false);
        const auto sel = nsga3_select(pts, refs, 20);
        EXPECT_EQ(sel.size(), 20u);
        EXPECT_EQ(std::set<std::size_t>(sel.begin(), sel.end()).size(), 20u);
        const auto front = brute_force_front(pts);
        const std::set<std::size_t> chosen(sel.begin(), sel.end());
        if (front.size() <= 20)
            for (std::size_t i : front) EXPECT_TRUE(chosen.count(i));
        else
            for (std::size_t i : sel) EXPECT_TRUE(std::count(front.begin(), front.end(), i));
    }
}
