#include "covfuzz/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "covfuzz/error.hpp"

namespace covfuzz {

std::string to_string(SamplingStrategy s) {
    switch (s) {
    case SamplingStrategy::Random: return "random";
    case SamplingStrategy::Clustered: return "clustered";
    case SamplingStrategy::Frequency: return "frequency";
    }
    return "unknown";
}

SamplingStrategy parse_sampling_strategy(std::string_view name) {
    if (name == "random" || name == "dsf-random") return SamplingStrategy::Random;
    if (name == "clustered" || name == "dsf-clustered") return SamplingStrategy::Clustered;
    if (name == "frequency" || name == "dsf-prob") return SamplingStrategy::Frequency;
    throw Error(ErrorCode::Config, "unknown sampling strategy '" + std::string(name) + "'");
}

void SamplerParams::validate() const {
    if (!(a > 0.0) || !std::isfinite(b)) throw Error(ErrorCode::Config, "sampler needs a > 0 and finite b");
    if (total < 1 || circle > total) throw Error(ErrorCode::Config, "sampler needs 0 <= circle <= total, total >= 1");
    if (clusters < 1) throw Error(ErrorCode::Config, "cluster count must be positive");
}

double p1(std::size_t x, double a, double b) {
    // exp overflows to +inf for huge exponents, which correctly yields 0.
    return 1.0 / (1.0 + std::exp(a * static_cast<double>(x) + b));
}

double p2_raw(double ncov_new, std::size_t circle, std::size_t total) {
    const double gain = std::max(ncov_new, kGainFloor);
    const double c = static_cast<double>(circle);
    const double t = static_cast<double>(total);
    return (1.0 + std::pow(c, 4) / std::pow(t, 3)) / std::sqrt(gain);
}

double p2(double ncov_new, std::size_t circle, std::size_t total) {
    return std::min(p2_raw(ncov_new, circle, total), 1.0);
}

double selection_probability(const Seed& seed, const SamplerParams& params) {
    const double w = static_cast<double>(params.circle) / static_cast<double>(params.total);
    if (params.circle == 0) return p1(seed.fuzz_count, params.a, params.b);
    if (params.circle == params.total) return p2(seed.last_gain, params.circle, params.total);
    return (1.0 - w) * p1(seed.fuzz_count, params.a, params.b) +
           w * p2(seed.last_gain, params.circle, params.total);
}

std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t count, Rng& rng) {
    std::vector<double> w(weights.begin(), weights.end());
    std::vector<std::size_t> chosen;
    count = std::min(count, w.size());
    chosen.reserve(count);
    for (std::size_t draw = 0; draw < count; ++draw) {
        double total = 0.0;
        for (double x : w)
            if (x > 0.0) total += x;
        std::size_t pick = w.size();
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (w[i] <= 0.0) continue;
                pick = i;
                if (r < w[i]) break;
                r -= w[i];
            }
        } else {
            // Every remaining weight underflowed; fall back to uniform over the rest.
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < w.size(); ++i)
                if (w[i] >= 0.0) rest.push_back(i);
            pick = rest[rng.below(rest.size())];
        }
        chosen.push_back(pick);
        w[pick] = -1.0;
    }
    return chosen;
}

std::vector<double> pooled_features(const Tensor& image) {
    constexpr std::size_t kCells = 8;
    const std::size_t h = image.height();
    const std::size_t wd = image.width();
    const std::size_t ch = image.channels();
    std::vector<double> f(kCells * kCells, 0.0);
    for (std::size_t cy = 0; cy < kCells; ++cy) {
        const std::size_t y0 = cy * h / kCells;
        const std::size_t y1 = std::max(y0 + 1, (cy + 1) * h / kCells);
        for (std::size_t cx = 0; cx < kCells; ++cx) {
            const std::size_t x0 = cx * wd / kCells;
            const std::size_t x1 = std::max(x0 + 1, (cx + 1) * wd / kCells);
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t y = y0; y < std::min(y1, h); ++y)
                for (std::size_t x = x0; x < std::min(x1, wd); ++x)
                    for (std::size_t c = 0; c < ch; ++c) {
                        sum += image.at(y, x, c);
                        ++n;
                    }
            f[cy * kCells + cx] = n ? sum / static_cast<double>(n) : 0.0;
        }
    }
    return f;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

std::size_t nearest(const std::vector<std::vector<double>>& centroids, const std::vector<double>& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(centroids[c], p);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t clusters, Rng& rng,
                    std::size_t max_iterations) {
    KMeansResult r;
    if (points.empty()) return r;
    clusters = std::min(clusters, points.size());

    // k-means++ seeding
    r.centroids.push_back(points[rng.below(points.size())]);
    std::vector<double> d2(points.size());
    while (r.centroids.size() < clusters) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            d2[i] = squared_distance(points[i], r.centroids[nearest(r.centroids, points[i])]);
            total += d2[i];
        }
        if (total <= 0.0) break;  // fewer distinct points than clusters
        double target = rng.uniform() * total;
        std::size_t pick = points.size() - 1;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (target < d2[i]) {
                pick = i;
                break;
            }
            target -= d2[i];
        }
        r.centroids.push_back(points[pick]);
    }

    r.assignment.assign(points.size(), 0);
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = iter == 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::size_t c = nearest(r.centroids, points[i]);
            if (c != r.assignment[i]) {
                r.assignment[i] = c;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<std::vector<double>> sums(r.centroids.size(),
                                              std::vector<double>(points[0].size(), 0.0));
        std::vector<std::size_t> counts(r.centroids.size(), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto& s = sums[r.assignment[i]];
            for (std::size_t j = 0; j < s.size(); ++j) s[j] += points[i][j];
            ++counts[r.assignment[i]];
        }
        for (std::size_t c = 0; c < r.centroids.size(); ++c) {
            if (counts[c] == 0) continue;  // keep the old centroid for an empty cluster
            for (std::size_t j = 0; j < sums[c].size(); ++j)
                r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
    }
    return r;
}

SeedSampler::SeedSampler(const SamplerParams& params, std::span<const Seed> initial_corpus, Rng& rng)
    : params_(params) {
    params_.validate();
    if (params_.strategy != SamplingStrategy::Clustered) return;
    std::vector<std::vector<double>> features;
    features.reserve(initial_corpus.size());
    for (const auto& s : initial_corpus) features.push_back(pooled_features(s.image));
    KMeansResult km = kmeans(features, params_.clusters, rng);
    centroids_ = std::move(km.centroids);
    cluster_of_ = std::move(km.assignment);
}

void SeedSampler::on_insert(const Seed& seed) {
    if (params_.strategy != SamplingStrategy::Clustered) return;
    cluster_of_.push_back(centroids_.empty() ? 0 : nearest(centroids_, pooled_features(seed.image)));
}

std::vector<std::size_t> SeedSampler::select_clustered(std::size_t corpus_size,
                                                       std::size_t batch_size, Rng& rng) {
    const std::size_t k = std::max<std::size_t>(centroids_.size(), 1);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < corpus_size; ++i) members[i < cluster_of_.size() ? cluster_of_[i] : 0].push_back(i);
    std::vector<std::size_t> chosen;
    std::size_t exhausted = 0;
    std::vector<bool> done(k, false);
    while (chosen.size() < batch_size && exhausted < k) {
        const std::size_t c = cursor_ % k;
        ++cursor_;
        if (done[c]) continue;
        auto& pool = members[c];
        if (pool.empty()) {
            done[c] = true;
            ++exhausted;
            continue;
        }
        const std::size_t at = rng.below(pool.size());
        chosen.push_back(pool[at]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
    }
    return chosen;
}

std::vector<std::size_t> SeedSampler::select_next(std::span<Seed> corpus, std::size_t batch_size,
                                                  Rng& rng) {
    if (corpus.empty()) throw Error(ErrorCode::Config, "cannot sample from an empty corpus");
    if (batch_size == 0) throw Error(ErrorCode::Config, "batch size must be positive");
    params_.validate();
    std::vector<std::size_t> chosen;
    switch (params_.strategy) {
    case SamplingStrategy::Random: {
        const std::vector<double> w(corpus.size(), 1.0);
        chosen = weighted_sample_without_replacement(w, batch_size, rng);
        break;
    }
    case SamplingStrategy::Frequency: {
        std::vector<double> w(corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) w[i] = selection_probability(corpus[i], params_);
        chosen = weighted_sample_without_replacement(w, batch_size, rng);
        break;
    }
    case SamplingStrategy::Clustered:
        chosen = select_clustered(corpus.size(), batch_size, rng);
        break;
    }
    for (std::size_t i : chosen) ++corpus[i].fuzz_count;
    return chosen;
}

}  // namespace covfuzz
