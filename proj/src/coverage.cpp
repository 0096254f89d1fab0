#include "covfuzz/coverage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "covfuzz/error.hpp"
#include "covfuzz/model_io.hpp"

namespace covfuzz {

std::size_t Bitset::count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

std::size_t Bitset::count_not_in(const Bitset& base) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < words_.size(); ++i)
        n += static_cast<std::size_t>(std::popcount(words_[i] & ~base.words_[i]));
    return n;
}

void Bitset::merge(const Bitset& other) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
}

bool Bitset::is_subset_of(const Bitset& other) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
        if (words_[i] & ~other.words_[i]) return false;
    return true;
}

ProfileBuilder::ProfileBuilder(std::size_t neurons)
    : low_(neurons, std::numeric_limits<float>::infinity()),
      high_(neurons, -std::numeric_limits<float>::infinity()) {}

void ProfileBuilder::add(std::span<const float> values) {
    if (values.size() != low_.size())
        throw Error(ErrorCode::StateMismatch, "trace length does not match profile");
    for (std::size_t i = 0; i < values.size(); ++i) {
        low_[i] = std::min(low_[i], values[i]);
        high_[i] = std::max(high_[i], values[i]);
    }
    ++samples_;
}

NeuronProfile ProfileBuilder::finish(int k) const {
    if (samples_ == 0) throw Error(ErrorCode::EmptyProfilingSet, "profiling set is empty");
    if (k < 1) throw Error(ErrorCode::Config, "k must be at least 1");
    NeuronProfile p;
    p.k = k;
    p.low = low_;
    p.high = high_;
    for (std::size_t i = 0; i < p.low.size(); ++i) {
        if (p.high[i] <= p.low[i]) {
            // Constant neurons get a tiny range; far from zero the float
            // epsilon can vanish, so fall back to the next representable value.
            float widened = p.low[i] + kDegenerateRangeEpsilon;
            if (widened <= p.low[i])
                widened = std::nextafter(p.low[i], std::numeric_limits<float>::infinity());
            p.high[i] = widened;
        }
    }
    return p;
}

NeuronProfile profile(const Model& model, std::span<const Tensor> profiling_set, int k) {
    if (profiling_set.empty()) throw Error(ErrorCode::EmptyProfilingSet, "profiling set is empty");
    ProfileBuilder builder(model.neuron_count());
    for (const auto& input : profiling_set) builder.add(forward(model, input).values);
    return builder.finish(k);
}

int classify_activation(float value, float low, float high, int k) {
    if (value < low) return -1;
    if (value > high) return k;
    const double t = (static_cast<double>(value) - low) / (static_cast<double>(high) - low) * k;
    const int section = static_cast<int>(std::floor(t));
    return std::clamp(section, 0, k - 1);
}

CoverageState::CoverageState(std::size_t neuron_count, int sections_per_neuron)
    : neurons(neuron_count),
      k(sections_per_neuron),
      sections(neuron_count * static_cast<std::size_t>(sections_per_neuron)),
      upper(neuron_count),
      lower(neuron_count) {}

namespace {

void check_dims(const CoverageState& state, const NeuronProfile& profile,
                std::span<const float> values) {
    if (state.neurons != profile.neuron_count() || state.k != profile.k ||
        values.size() != profile.neuron_count())
        throw Error(ErrorCode::StateMismatch, "coverage state, profile and trace disagree in size");
}

// Same rule as classify_activation, written branch-free so it vectorises.
const std::vector<int>& classify_all(const NeuronProfile& profile, std::span<const float> values) {
    thread_local std::vector<int> cells;
    cells.resize(values.size());
    const float* low = profile.low.data();
    const float* high = profile.high.data();
    const int k = profile.k;
    const double top = static_cast<double>(k - 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double t = (static_cast<double>(values[i]) - low[i]) / (static_cast<double>(high[i]) - low[i]) * k;
        // t is clamped non-negative first, so truncation is floor.
        const int section = static_cast<int>(std::min(std::max(t, 0.0), top));
        cells[i] = values[i] < low[i] ? -1 : (values[i] > high[i] ? k : section);
    }
    return cells;
}

}  // namespace

CoverageDelta update(CoverageState& state, const NeuronProfile& profile,
                     std::span<const float> values) {
    check_dims(state, profile, values);
    CoverageDelta delta;
    const auto k = static_cast<std::size_t>(profile.k);
    const std::vector<int>& cells = classify_all(profile, values);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int cell = cells[i];
        if (cell < 0) {
            delta.lower += state.lower.set(i);
        } else if (cell == profile.k) {
            delta.upper += state.upper.set(i);
        } else {
            delta.sections += state.sections.set(i * k + static_cast<std::size_t>(cell));
        }
    }
    return delta;
}

CoverageDelta update_against(CoverageState& local, const CoverageState& base,
                             const NeuronProfile& profile, std::span<const float> values) {
    check_dims(local, profile, values);
    if (!local.same_dimensions(base))
        throw Error(ErrorCode::StateMismatch, "local and base coverage states differ in size");
    CoverageDelta delta;
    const auto k = static_cast<std::size_t>(profile.k);
    const std::vector<int>& cells = classify_all(profile, values);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int cell = cells[i];
        if (cell < 0) {
            if (local.lower.set(i) && !base.lower.test(i)) ++delta.lower;
        } else if (cell == profile.k) {
            if (local.upper.set(i) && !base.upper.test(i)) ++delta.upper;
        } else {
            const std::size_t bit = i * k + static_cast<std::size_t>(cell);
            if (local.sections.set(bit) && !base.sections.test(bit)) ++delta.sections;
        }
    }
    return delta;
}

double kmnc(const CoverageState& state) {
    if (state.neurons == 0) return 0.0;
    return static_cast<double>(state.sections.count()) /
           static_cast<double>(state.neurons * static_cast<std::size_t>(state.k));
}

double nbc(const CoverageState& state) {
    if (state.neurons == 0) return 0.0;
    return static_cast<double>(state.upper.count() + state.lower.count()) /
           static_cast<double>(2 * state.neurons);
}

double snac(const CoverageState& state) {
    if (state.neurons == 0) return 0.0;
    return static_cast<double>(state.upper.count()) / static_cast<double>(state.neurons);
}

CoverageVector measure(const CoverageState& state) {
    return {kmnc(state), nbc(state), snac(state)};
}

CoverageDelta bits_not_in(const CoverageState& local, const CoverageState& base) {
    if (!local.same_dimensions(base))
        throw Error(ErrorCode::StateMismatch, "coverage states differ in size");
    return {local.sections.count_not_in(base.sections), local.upper.count_not_in(base.upper),
            local.lower.count_not_in(base.lower)};
}

CoverageVector to_fractions(const CoverageDelta& delta, std::size_t neurons, int k) {
    if (neurons == 0) return {};
    const auto n = static_cast<double>(neurons);
    return {static_cast<double>(delta.sections) / (n * k),
            static_cast<double>(delta.upper + delta.lower) / (2.0 * n),
            static_cast<double>(delta.upper) / n};
}

CoverageVector gain_over(const CoverageState& local, const CoverageState& base) {
    return to_fractions(bits_not_in(local, base), local.neurons, local.k);
}

void merge_into(CoverageState& target, const CoverageState& other) {
    if (!target.same_dimensions(other))
        throw Error(ErrorCode::StateMismatch, "cannot merge coverage states of different sizes");
    target.sections.merge(other.sections);
    target.upper.merge(other.upper);
    target.lower.merge(other.lower);
}

CoverageState merge(const CoverageState& a, const CoverageState& b) {
    CoverageState out = a;
    merge_into(out, b);
    return out;
}

namespace {

struct BinaryHeader {
    std::size_t neurons = 0;
    int k = 0;
    std::size_t payload_offset = 0;
};

std::string make_header(std::string_view magic, std::size_t neurons, int k) {
    std::ostringstream h;
    h << magic << " 1\nneurons " << neurons << "\nk " << k << "\nend\n";
    return h.str();
}

BinaryHeader parse_header(std::string_view bytes, std::string_view magic) {
    constexpr std::string_view kEnd = "\nend\n";
    const auto end = bytes.find(kEnd);
    if (end == std::string_view::npos)
        throw Error(ErrorCode::MalformedHeader, std::string(magic) + ": missing 'end' line");
    std::istringstream in{std::string(bytes.substr(0, end))};
    std::string m, key;
    int version = 0;
    BinaryHeader h;
    long long neurons = -1;
    if (!(in >> m >> version) || m != magic || version != 1)
        throw Error(ErrorCode::MalformedHeader, std::string(magic) + ": bad magic or version");
    if (!(in >> key >> neurons) || key != "neurons" || neurons < 0)
        throw Error(ErrorCode::MalformedHeader, std::string(magic) + ": bad neuron count");
    if (!(in >> key >> h.k) || key != "k" || h.k < 1)
        throw Error(ErrorCode::MalformedHeader, std::string(magic) + ": bad k");
    h.neurons = static_cast<std::size_t>(neurons);
    h.payload_offset = end + kEnd.size();
    return h;
}

void append_words(std::string& out, const Bitset& b) {
    for (auto w : b.words())
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((w >> (8 * i)) & 0xffu));
}

std::size_t read_words(std::string_view bytes, std::size_t offset, Bitset& b) {
    const std::size_t need = b.words().size() * 8;
    if (bytes.size() < offset + need)
        throw Error(ErrorCode::TruncatedPayload, "coverage checkpoint is truncated");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    for (auto& w : b.words()) {
        w = 0;
        for (int i = 0; i < 8; ++i) w |= std::uint64_t{p[i]} << (8 * i);
        p += 8;
    }
    return offset + need;
}

}  // namespace

std::string serialize_profile(const NeuronProfile& profile) {
    std::string out = make_header("covfuzz-profile", profile.neuron_count(), profile.k);
    for (std::size_t i = 0; i < profile.neuron_count(); ++i) {
        append_f32_le(out, profile.low[i]);
        append_f32_le(out, profile.high[i]);
    }
    return out;
}

NeuronProfile deserialize_profile(std::string_view bytes) {
    const BinaryHeader h = parse_header(bytes, "covfuzz-profile");
    if (bytes.size() - h.payload_offset != h.neurons * 8)
        throw Error(ErrorCode::TruncatedPayload, "profile payload size does not match neuron count");
    NeuronProfile p;
    p.k = h.k;
    p.low.resize(h.neurons);
    p.high.resize(h.neurons);
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + h.payload_offset);
    for (std::size_t i = 0; i < h.neurons; ++i) {
        p.low[i] = read_f32_le(raw + 8 * i);
        p.high[i] = read_f32_le(raw + 8 * i + 4);
        if (!(p.low[i] <= p.high[i]))
            throw Error(ErrorCode::MalformedHeader,
                        "profile neuron " + std::to_string(i) + " has low > high");
    }
    return p;
}

void save_profile(const NeuronProfile& profile, const std::filesystem::path& path) {
    write_file(path, serialize_profile(profile));
}

NeuronProfile load_profile(const std::filesystem::path& path) {
    return deserialize_profile(read_file(path));
}

std::string serialize_state(const CoverageState& state) {
    std::string out = make_header("covfuzz-coverage", state.neurons, state.k);
    append_words(out, state.sections);
    append_words(out, state.upper);
    append_words(out, state.lower);
    return out;
}

CoverageState deserialize_state(std::string_view bytes) {
    const BinaryHeader h = parse_header(bytes, "covfuzz-coverage");
    CoverageState s(h.neurons, h.k);
    std::size_t offset = read_words(bytes, h.payload_offset, s.sections);
    offset = read_words(bytes, offset, s.upper);
    offset = read_words(bytes, offset, s.lower);
    if (offset != bytes.size())
        throw Error(ErrorCode::TruncatedPayload, "coverage checkpoint has trailing bytes");
    return s;
}

}  // namespace covfuzz
