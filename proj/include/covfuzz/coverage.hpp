#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covfuzz/model.hpp"

namespace covfuzz {

/// Fixed-size bitset with the handful of set operations coverage needs.
class Bitset {
public:
    Bitset() = default;
    explicit Bitset(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

    std::size_t size() const { return bits_; }
    bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
    /// Returns true if the bit was previously clear.
    bool set(std::size_t i) {
        const std::uint64_t mask = std::uint64_t{1} << (i & 63);
        std::uint64_t& w = words_[i >> 6];
        const bool fresh = (w & mask) == 0;
        w |= mask;
        return fresh;
    }
    std::size_t count() const;
    /// popcount(this & ~base)
    std::size_t count_not_in(const Bitset& base) const;
    void merge(const Bitset& other);
    bool is_subset_of(const Bitset& other) const;

    const std::vector<std::uint64_t>& words() const { return words_; }
    std::vector<std::uint64_t>& words() { return words_; }

    bool operator==(const Bitset&) const = default;

private:
    std::size_t bits_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Per-neuron activation range observed on the profiling set, split into k sections.
struct NeuronProfile {
    int k = 10;
    std::vector<float> low;
    std::vector<float> high;

    std::size_t neuron_count() const { return low.size(); }
    bool operator==(const NeuronProfile&) const = default;
};

inline constexpr float kDegenerateRangeEpsilon = 1e-6f;

/// Accumulates running min/max so profiles can be built without keeping traces.
class ProfileBuilder {
public:
    explicit ProfileBuilder(std::size_t neurons);
    void add(std::span<const float> values);
    std::size_t samples() const { return samples_; }
    /// Throws Error{EmptyProfilingSet} if nothing was added.
    NeuronProfile finish(int k) const;

private:
    std::vector<float> low_;
    std::vector<float> high_;
    std::size_t samples_ = 0;
};

NeuronProfile profile(const Model& model, std::span<const Tensor> profiling_set, int k);

/// Where one activation value lands relative to a neuron's profiled range.
/// Returns -1 below low, k above high, otherwise the section index in [0, k-1].
int classify_activation(float value, float low, float high, int k);

struct CoverageDelta {
    std::size_t sections = 0;
    std::size_t upper = 0;
    std::size_t lower = 0;

    std::size_t total() const { return sections + upper + lower; }
    bool any() const { return total() > 0; }
    CoverageDelta& operator+=(const CoverageDelta& o) {
        sections += o.sections;
        upper += o.upper;
        lower += o.lower;
        return *this;
    }
    bool operator==(const CoverageDelta&) const = default;
};

struct CoverageVector {
    double kmnc = 0.0;
    double nbc = 0.0;
    double snac = 0.0;

    double sum() const { return kmnc + nbc + snac; }
    bool operator==(const CoverageVector&) const = default;
};

/// Monotone record of covered k-sections and boundary corners.
struct CoverageState {
    std::size_t neurons = 0;
    int k = 0;
    Bitset sections;
    Bitset upper;
    Bitset lower;

    CoverageState() = default;
    CoverageState(std::size_t neuron_count, int sections_per_neuron);
    static CoverageState empty_for(const NeuronProfile& profile) {
        return CoverageState(profile.neuron_count(), profile.k);
    }

    bool same_dimensions(const CoverageState& o) const { return neurons == o.neurons && k == o.k; }
    bool operator==(const CoverageState&) const = default;
};

CoverageDelta update(CoverageState& state, const NeuronProfile& profile,
                     std::span<const float> values);

/// Records `values` into `local`, counting only bits that are new to both
/// `local` and the frozen `base`.
CoverageDelta update_against(CoverageState& local, const CoverageState& base,
                             const NeuronProfile& profile, std::span<const float> values);

double kmnc(const CoverageState& state);
double nbc(const CoverageState& state);
double snac(const CoverageState& state);
CoverageVector measure(const CoverageState& state);

/// Coverage fractions contributed by bits of `local` that `base` lacks.
CoverageVector gain_over(const CoverageState& local, const CoverageState& base);
CoverageDelta bits_not_in(const CoverageState& local, const CoverageState& base);
/// Converts bit counts to fractions of the state's cell counts.
CoverageVector to_fractions(const CoverageDelta& delta, std::size_t neurons, int k);

CoverageState merge(const CoverageState& a, const CoverageState& b);
void merge_into(CoverageState& target, const CoverageState& other);

// Profile file: "covfuzz-profile 1\nneurons N\nk K\nend\n" followed by
// little-endian float32 (low, high) pairs per neuron.
std::string serialize_profile(const NeuronProfile& profile);
NeuronProfile deserialize_profile(std::string_view bytes);
void save_profile(const NeuronProfile& profile, const std::filesystem::path& path);
NeuronProfile load_profile(const std::filesystem::path& path);

// State checkpoint: "covfuzz-coverage 1\nneurons N\nk K\nend\n" followed by the
// little-endian 64-bit words of the sections, upper and lower bitsets.
std::string serialize_state(const CoverageState& state);
CoverageState deserialize_state(std::string_view bytes);

}  // namespace covfuzz
