#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covfuzz/random.hpp"
#include "covfuzz/tensor.hpp"

namespace covfuzz {

enum class SeedOrigin { Initial, Generated };

struct Seed {
    std::size_t id = 0;
    Tensor image;
    /// Index of the initial seed this one descends from (itself for initial seeds).
    std::size_t root = 0;
    /// Model prediction for `image`, recorded when the seed entered the corpus.
    int label = 0;
    std::size_t fuzz_count = 0;
    double last_gain = 0.0;
    SeedOrigin origin = SeedOrigin::Initial;
};

enum class SamplingStrategy { Random, Clustered, Frequency };

std::string to_string(SamplingStrategy s);
/// Accepts the short names and their dsf- aliases (dsf-random, dsf-clustered, dsf-prob).
SamplingStrategy parse_sampling_strategy(std::string_view name);

struct SamplerParams {
    double a = 0.3;
    double b = -1.0;
    std::size_t total = 1;
    std::size_t circle = 0;
    SamplingStrategy strategy = SamplingStrategy::Frequency;
    std::size_t clusters = 10;

    void validate() const;
};

inline constexpr double kGainFloor = 1e-6;

/// Selection-count prior: 1 / (1 + e^(a x + b)).
double p1(std::size_t x, double a, double b);
/// Coverage-gain term before clamping: (1 + circle^4 / total^3) / sqrt(max(gain, floor)).
double p2_raw(double ncov_new, std::size_t circle, std::size_t total);
/// p2_raw clamped into (0, 1].
double p2(double ncov_new, std::size_t circle, std::size_t total);
/// (1 - circle/total) p1 + (circle/total) p2.
double selection_probability(const Seed& seed, const SamplerParams& params);

/// Draws `count` distinct indices with probability proportional to `weights`.
std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t count, Rng& rng);

/// 8x8 mean-pooled pixel features (averaged over channels).
std::vector<double> pooled_features(const Tensor& image);

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<std::size_t> assignment;
};

KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t clusters, Rng& rng,
                    std::size_t max_iterations = 100);

/// Picks the next fuzzing batch from the corpus and bumps the chosen seeds' fuzz counts.
class SeedSampler {
public:
    /// For the clustered strategy the initial corpus is partitioned with k-means here.
    SeedSampler(const SamplerParams& params, std::span<const Seed> initial_corpus, Rng& rng);

    SamplerParams& params() { return params_; }
    const SamplerParams& params() const { return params_; }

    /// Must be called for each seed appended to the corpus after construction.
    void on_insert(const Seed& seed);

    /// Returns indices into `corpus`. A batch larger than the corpus selects everything.
    std::vector<std::size_t> select_next(std::span<Seed> corpus, std::size_t batch_size, Rng& rng);

    const std::vector<std::size_t>& cluster_of() const { return cluster_of_; }

private:
    std::vector<std::size_t> select_clustered(std::size_t corpus_size, std::size_t batch_size, Rng& rng);

    SamplerParams params_;
    std::vector<std::vector<double>> centroids_;
    std::vector<std::size_t> cluster_of_;
    std::size_t cursor_ = 0;
};

}  // namespace covfuzz
