#include "covfuzz/chromosome.hpp"

#include <algorithm>
#include <cmath>

namespace covfuzz {

std::size_t Chromosome::active_regions() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

bool Chromosome::valid(std::size_t regions, std::size_t level_count) const {
    if (mask.size() != regions || operators.size() != regions || levels.size() != regions) return false;
    for (std::size_t i = 0; i < regions; ++i)
        if (mask[i] > 1 || operators[i] >= kOperatorCount || levels[i] >= level_count) return false;
    return true;
}

std::vector<int> Chromosome::flatten() const {
    std::vector<int> out;
    out.reserve(3 * size());
    for (auto g : mask) out.push_back(g);
    for (auto g : operators) out.push_back(g);
    for (auto g : levels) out.push_back(g);
    return out;
}

Chromosome random_chromosome(std::size_t regions, std::size_t level_count, double mask_probability,
                             Rng& rng) {
    Chromosome c(regions);
    for (std::size_t i = 0; i < regions; ++i) {
        c.mask[i] = rng.bernoulli(mask_probability) ? 1 : 0;
        c.operators[i] = static_cast<std::uint8_t>(rng.below(kOperatorCount));
        c.levels[i] = static_cast<std::uint8_t>(rng.below(level_count));
    }
    return c;
}

Tensor decode_apply(const Chromosome& c, const Tensor& image, const RegionGrid& grid,
                    const MutationTables& tables) {
    Tensor out = image;
    for (std::size_t r = 0; r < c.size(); ++r)
        if (c.mask[r]) apply_in_place(out, grid.region(r), c.op_at(r), tables);
    return out;
}

namespace {

// Gene parts share the relaxation machinery; only the upper bound and the
// decoding differ.
enum class Part { Mask, Operator, Level };

double upper_bound(Part p, std::size_t level_count) {
    switch (p) {
    case Part::Mask: return 1.0;
    case Part::Operator: return static_cast<double>(kOperatorCount - 1);
    case Part::Level: return static_cast<double>(level_count - 1);
    }
    return 0.0;
}

std::uint8_t decode(Part p, double v, double upper) {
    if (p == Part::Mask) return v >= 0.5 ? 1 : 0;
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, upper));
}

std::vector<std::uint8_t>& genes(Chromosome& c, Part p) {
    switch (p) {
    case Part::Mask: return c.mask;
    case Part::Operator: return c.operators;
    case Part::Level: return c.levels;
    }
    return c.mask;
}

constexpr Part kParts[] = {Part::Mask, Part::Operator, Part::Level};

// Deb & Agrawal's bounded SBX for one variable pair.
std::pair<double, double> sbx_pair(double x1, double x2, double lo, double hi, double eta, Rng& rng) {
    if (std::fabs(x1 - x2) <= 1e-14 || hi <= lo) return {x1, x2};
    const double y1 = std::min(x1, x2);
    const double y2 = std::max(x1, x2);
    const double u = rng.uniform();

    auto betaq_for = [&](double beta) {
        const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
        if (u <= 1.0 / alpha) return std::pow(u * alpha, 1.0 / (eta + 1.0));
        return std::pow(1.0 / (2.0 - u * alpha), 1.0 / (eta + 1.0));
    };

    const double beta1 = 1.0 + 2.0 * (y1 - lo) / (y2 - y1);
    double c1 = 0.5 * ((y1 + y2) - betaq_for(beta1) * (y2 - y1));
    const double beta2 = 1.0 + 2.0 * (hi - y2) / (y2 - y1);
    double c2 = 0.5 * ((y1 + y2) + betaq_for(beta2) * (y2 - y1));
    c1 = std::clamp(c1, lo, hi);
    c2 = std::clamp(c2, lo, hi);
    if (rng.bernoulli(0.5)) std::swap(c1, c2);
    // Keep the child-to-parent correspondence stable when parents were unordered.
    if (x1 > x2) std::swap(c1, c2);
    return {c1, c2};
}

}  // namespace

std::pair<Chromosome, Chromosome> sbx_crossover(const Chromosome& a, const Chromosome& b,
                                                std::size_t level_count, double eta, Rng& rng) {
    Chromosome c1 = a;
    Chromosome c2 = b;
    for (Part part : kParts) {
        const double hi = upper_bound(part, level_count);
        auto& g1 = genes(c1, part);
        auto& g2 = genes(c2, part);
        for (std::size_t i = 0; i < g1.size(); ++i) {
            if (!rng.bernoulli(0.5)) continue;
            auto [v1, v2] = sbx_pair(g1[i], g2[i], 0.0, hi, eta, rng);
            g1[i] = decode(part, v1, hi);
            g2[i] = decode(part, v2, hi);
        }
    }
    return {std::move(c1), std::move(c2)};
}

Chromosome polynomial_mutation(const Chromosome& c, double probability, std::size_t level_count,
                               double eta, Rng& rng, std::size_t* mutated) {
    Chromosome out = c;
    std::size_t picked = 0;
    for (Part part : kParts) {
        const double hi = upper_bound(part, level_count);
        auto& g = genes(out, part);
        for (auto& gene : g) {
            if (!rng.bernoulli(probability) || hi <= 0.0) continue;
            ++picked;
            const double y = gene;
            const double d1 = y / hi;
            const double d2 = (hi - y) / hi;
            const double u = rng.uniform();
            const double pw = 1.0 / (eta + 1.0);
            double dq = 0.0;
            if (u < 0.5) {
                const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta + 1.0);
                dq = std::pow(val, pw) - 1.0;
            } else {
                const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta + 1.0);
                dq = 1.0 - std::pow(val, pw);
            }
            std::uint8_t next = decode(part, std::clamp(y + dq * hi, 0.0, hi), hi);
            if (next == gene) {
                const auto top = static_cast<std::uint8_t>(hi);
                const bool up = gene == 0 || (dq >= 0.0 && gene < top);
                next = up ? static_cast<std::uint8_t>(gene + 1) : static_cast<std::uint8_t>(gene - 1);
            }
            gene = next;
        }
    }
    if (mutated) *mutated = picked;
    return out;
}

}  // namespace covfuzz
