#include "covfuzz/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace covfuzz {

bool dominates(const Objectives& a, const Objectives& b) {
    bool strictly = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strictly = true;
    }
    return strictly;
}

double euclidean(const Objectives& a, const Objectives& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

Spea2Fitness spea2_fitness(std::span<const Objectives> points) {
    const std::size_t n = points.size();
    Spea2Fitness f;
    f.strength.assign(n, 0);
    f.raw.assign(n, 0.0);
    f.density.assign(n, 0.0);
    f.fitness.assign(n, 0.0);
    if (n == 0) return f;

    std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && dominates(points[i], points[j])) {
                dom[i][j] = true;
                ++f.strength[i];
            }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (dom[j][i]) f.raw[i] += static_cast<double>(f.strength[j]);

    const auto k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
        d.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back(euclidean(points[i], points[j]));
        double sigma = 0.0;
        if (!d.empty()) {
            const std::size_t idx = std::min(k, d.size()) - 1;
            std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(idx), d.end());
            sigma = d[idx];
        }
        f.density[i] = 1.0 / (sigma + 2.0);
        f.fitness[i] = f.raw[i] + f.density[i];
    }
    return f;
}

std::vector<std::size_t> spea2_truncation_select(std::span<const Objectives> points,
                                                 std::span<const double> fitness,
                                                 std::size_t capacity) {
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (fitness[i] < 1.0) chosen.push_back(i);

    if (chosen.size() < capacity) {
        std::vector<std::size_t> dominated;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (!(fitness[i] < 1.0)) dominated.push_back(i);
        std::stable_sort(dominated.begin(), dominated.end(),
                         [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });
        for (std::size_t i = 0; i < dominated.size() && chosen.size() < capacity; ++i)
            chosen.push_back(dominated[i]);
        std::sort(chosen.begin(), chosen.end());
        return chosen;
    }

    while (chosen.size() > capacity) {
        // Remove the member whose sorted neighbour-distance list is
        // lexicographically smallest; ties fall to the lowest index.
        std::vector<std::vector<double>> dists(chosen.size());
        for (std::size_t a = 0; a < chosen.size(); ++a) {
            for (std::size_t b = 0; b < chosen.size(); ++b)
                if (a != b) dists[a].push_back(euclidean(points[chosen[a]], points[chosen[b]]));
            std::sort(dists[a].begin(), dists[a].end());
        }
        std::size_t victim = 0;
        for (std::size_t a = 1; a < chosen.size(); ++a)
            if (dists[a] < dists[victim]) victim = a;
        chosen.erase(chosen.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    return chosen;
}

std::vector<Objectives> generate_weight_vectors(std::size_t divisions) {
    std::vector<Objectives> out;
    const double h = static_cast<double>(divisions);
    for (std::size_t i = 0; i <= divisions; ++i)
        for (std::size_t j = 0; i + j <= divisions; ++j) {
            const std::size_t k = divisions - i - j;
            out.push_back({static_cast<double>(i) / h, static_cast<double>(j) / h,
                           static_cast<double>(k) / h});
        }
    return out;
}

double perpendicular_distance(const Objectives& point, const Objectives& direction) {
    double dot = 0.0;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        dot += point[i] * direction[i];
        norm2 += direction[i] * direction[i];
    }
    const double t = norm2 > 0.0 ? dot / norm2 : 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double r = point[i] - t * direction[i];
        s += r * r;
    }
    return std::sqrt(s);
}

std::vector<Objectives> normalize_to_ideal(std::span<const Objectives> points, const Objectives& ideal) {
    Objectives nadir = ideal;
    for (const auto& p : points)
        for (std::size_t i = 0; i < 3; ++i) nadir[i] = std::max(nadir[i], p[i]);
    for (std::size_t i = 0; i < 3; ++i) nadir[i] = std::max(nadir[i], ideal[i] + 1e-9);
    std::vector<Objectives> out(points.size());
    for (std::size_t n = 0; n < points.size(); ++n)
        for (std::size_t i = 0; i < 3; ++i)
            out[n][i] = (nadir[i] - points[n][i]) / (nadir[i] - ideal[i]);
    return out;
}

DecompositionSelection decomposition_select(std::span<const Objectives> points,
                                            std::span<const Objectives> weights, Objectives& ideal,
                                            std::size_t capacity) {
    DecompositionSelection r;
    for (const auto& p : points)
        for (std::size_t i = 0; i < 3; ++i) ideal[i] = std::min(ideal[i], p[i]);

    r.normalized = normalize_to_ideal(points, ideal);
    r.assignment.resize(points.size());
    r.distance.resize(points.size());
    for (std::size_t n = 0; n < points.size(); ++n) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w < weights.size(); ++w) {
            const double d = perpendicular_distance(r.normalized[n], weights[w]);
            if (d < best_d) {
                best_d = d;
                best = w;
            }
        }
        r.assignment[n] = best;
        r.distance[n] = best_d;
    }

    std::vector<std::vector<std::size_t>> members(weights.size());
    for (std::size_t n = 0; n < points.size(); ++n) members[r.assignment[n]].push_back(n);

    for (const auto& group : members) {
        std::size_t keep = points.size();
        for (std::size_t a : group) {
            const bool dominated = std::any_of(group.begin(), group.end(), [&](std::size_t b) {
                return dominates(points[b], points[a]);
            });
            if (dominated) continue;
            if (keep == points.size() || r.distance[a] < r.distance[keep]) keep = a;
        }
        if (keep != points.size()) r.selected.push_back(keep);
    }

    if (r.selected.size() > capacity) {
        // Each subspace holds one member, so overflow drops the members
        // farthest from their rays (ties: highest index first).
        std::stable_sort(r.selected.begin(), r.selected.end(), [&](std::size_t a, std::size_t b) {
            if (r.distance[a] != r.distance[b]) return r.distance[a] < r.distance[b];
            return a < b;
        });
        r.selected.resize(capacity);
    }
    std::sort(r.selected.begin(), r.selected.end());
    return r;
}

std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const Objectives> points) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated_by_me(n);
    std::vector<std::size_t> dom_count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(points[i], points[j])) dominated_by_me[i].push_back(j);
            else if (dominates(points[j], points[i])) ++dom_count[i];
        }
        if (dom_count[i] == 0) current.push_back(i);
    }
    while (!current.empty()) {
        fronts.push_back(current);
        std::vector<std::size_t> next;
        for (std::size_t i : current)
            for (std::size_t j : dominated_by_me[i])
                if (--dom_count[j] == 0) next.push_back(j);
        std::sort(next.begin(), next.end());
        current = std::move(next);
    }
    return fronts;
}

namespace {

// Solves a 3x3 system by Gaussian elimination with partial pivoting.
bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b, std::array<double, 3>& x) {
    for (std::size_t col = 0; col < 3; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < 3; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        if (std::fabs(a[pivot][col]) < 1e-12) return false;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < 3; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < 3; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    for (std::size_t i = 3; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < 3; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return true;
}

}  // namespace

std::vector<std::size_t> nsga3_select(std::span<const Objectives> points,
                                      std::span<const Objectives> references, std::size_t count) {
    const auto fronts = nondominated_sort(points);
    std::vector<std::size_t> selected;
    std::size_t last = 0;
    for (; last < fronts.size(); ++last) {
        if (selected.size() + fronts[last].size() > count) break;
        selected.insert(selected.end(), fronts[last].begin(), fronts[last].end());
    }
    if (selected.size() >= count || last == fronts.size()) {
        std::sort(selected.begin(), selected.end());
        return selected;
    }

    std::vector<std::size_t> pool = selected;
    pool.insert(pool.end(), fronts[last].begin(), fronts[last].end());

    // Normalise: translate by the ideal point, find extreme points with the
    // achievement scalarising function, and intersect their hyperplane with the axes.
    Objectives ideal{};
    ideal.fill(std::numeric_limits<double>::infinity());
    for (std::size_t i : pool)
        for (std::size_t m = 0; m < 3; ++m) ideal[m] = std::min(ideal[m], points[i][m]);
    std::vector<Objectives> shifted(points.size());
    for (std::size_t i : pool)
        for (std::size_t m = 0; m < 3; ++m) shifted[i][m] = points[i][m] - ideal[m];

    std::array<std::array<double, 3>, 3> extremes{};
    for (std::size_t axis = 0; axis < 3; ++axis) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i : pool) {
            double asf = 0.0;
            for (std::size_t m = 0; m < 3; ++m)
                asf = std::max(asf, shifted[i][m] / (m == axis ? 1.0 : 1e-6));
            if (asf < best) {
                best = asf;
                extremes[axis] = shifted[i];
            }
        }
    }
    Objectives intercept{};
    std::array<double, 3> plane{};
    bool ok = solve3(extremes, {1.0, 1.0, 1.0}, plane);
    for (std::size_t m = 0; m < 3 && ok; ++m) {
        if (!(plane[m] > 1e-12)) ok = false;
        else intercept[m] = 1.0 / plane[m];
        if (ok && !(intercept[m] > 1e-10)) ok = false;
    }
    if (!ok) {
        for (std::size_t m = 0; m < 3; ++m) {
            double worst = 0.0;
            for (std::size_t i : pool) worst = std::max(worst, shifted[i][m]);
            intercept[m] = std::max(worst, 1e-10);
        }
    }

    std::vector<std::size_t> ref_of(points.size(), 0);
    std::vector<double> dist_of(points.size(), 0.0);
    for (std::size_t i : pool) {
        Objectives normed{};
        for (std::size_t m = 0; m < 3; ++m) normed[m] = shifted[i][m] / intercept[m];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < references.size(); ++r) {
            const double d = perpendicular_distance(normed, references[r]);
            if (d < best) {
                best = d;
                ref_of[i] = r;
            }
        }
        dist_of[i] = best;
    }

    std::vector<std::size_t> niche(references.size(), 0);
    for (std::size_t i : selected) ++niche[ref_of[i]];

    std::vector<std::size_t> remaining = fronts[last];
    std::vector<bool> excluded(references.size(), false);
    while (selected.size() < count && !remaining.empty()) {
        std::size_t ref = references.size();
        for (std::size_t r = 0; r < references.size(); ++r) {
            if (excluded[r]) continue;
            if (ref == references.size() || niche[r] < niche[ref]) ref = r;
        }
        if (ref == references.size()) break;
        std::size_t pick = remaining.size();
        for (std::size_t c = 0; c < remaining.size(); ++c) {
            if (ref_of[remaining[c]] != ref) continue;
            if (pick == remaining.size()) {
                pick = c;
            } else if (niche[ref] == 0 && dist_of[remaining[c]] < dist_of[remaining[pick]]) {
                pick = c;
            }
        }
        if (pick == remaining.size()) {
            excluded[ref] = true;
            continue;
        }
        selected.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
        ++niche[ref];
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

}  // namespace covfuzz
