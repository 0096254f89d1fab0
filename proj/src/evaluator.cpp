#include "covfuzz/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "covfuzz/error.hpp"

namespace covfuzz {

Evaluator::Evaluator(const Model& model, const NeuronProfile& profile, RegionGrid grid,
                     MutationTables tables, ConstraintParams constraint)
    : model_(&model),
      profile_(&profile),
      grid_(grid),
      tables_(std::move(tables)),
      constraint_(constraint) {
    tables_.validate();
    constraint_.validate();
}

namespace {

ImageDistance region_distance(const Tensor& a, const Tensor& b, const Rect& r) {
    const std::size_t w = a.width(), ch = a.channels();
    ImageDistance d;
    for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t i = (y * w + r.x0) * ch; i < (y * w + r.x1) * ch; ++i) {
            if (a.data[i] != b.data[i]) ++d.l0;
            d.linf = std::max(d.linf, std::fabs(a.data[i] - b.data[i]));
        }
    return d;
}

void combine(ImageDistance& into, const ImageDistance& d) {
    into.l0 += d.l0;
    into.linf = std::max(into.linf, d.linf);
}

}  // namespace

PreparedBatch Evaluator::prepare(std::span<const BatchItem> batch) const {
    PreparedBatch out;
    out.patches.resize(batch.size());
    const std::size_t levels = tables_.levels();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor& image = *batch[i].image;
        const Tensor& reference = *batch[i].reference;
        if (image.shape != reference.shape)
            throw Error(ErrorCode::ShapeMismatch, "seed and reference differ in shape");
        ItemPatches& ip = out.patches[i];
        const std::size_t w = image.width(), ch = image.channels();
        for (std::size_t r = 0; r < grid_.size(); ++r) {
            const Rect rect = grid_.region(r);
            ip.regions.push_back(rect);
            ip.base.push_back(region_distance(image, reference, rect));
            std::vector<ItemPatches::Patch> row;
            for (std::size_t o = 0; o < kOperatorCount * levels; ++o) {
                const Tensor mutant = apply(image, rect, {static_cast<Operator>(o / levels), o % levels}, tables_);
                ItemPatches::Patch p;
                p.distance = region_distance(mutant, reference, rect);
                p.changed = region_distance(mutant, image, rect).l0 > 0;
                for (std::size_t y = rect.y0; y < rect.y1; ++y)
                    p.pixels.insert(p.pixels.end(), mutant.data.begin() + static_cast<std::ptrdiff_t>((y * w + rect.x0) * ch),
                                    mutant.data.begin() + static_cast<std::ptrdiff_t>((y * w + rect.x1) * ch));
                row.push_back(std::move(p));
            }
            ip.patches.push_back(std::move(row));
        }
    }
    out.items.assign(batch.begin(), batch.end());
    for (std::size_t i = 0; i < batch.size(); ++i) out.items[i].patches = &out.patches[i];
    return out;
}

ImageDistance Evaluator::patched_distance(const Chromosome& c, const ItemPatches& p) const {
    if (c.size() != p.regions.size()) throw Error(ErrorCode::Config, "chromosome does not match the region grid");
    ImageDistance d;
    const std::size_t levels = tables_.levels();
    for (std::size_t r = 0; r < p.regions.size(); ++r)
        combine(d, c.mask[r] ? p.patches[r][c.operators[r] * levels + c.levels[r]].distance : p.base[r]);
    return d;
}

bool Evaluator::patched_changes(const Chromosome& c, const ItemPatches& p) const {
    const std::size_t levels = tables_.levels();
    for (std::size_t r = 0; r < p.regions.size(); ++r)
        if (c.mask[r] && p.patches[r][c.operators[r] * levels + c.levels[r]].changed) return true;
    return false;
}

Tensor Evaluator::decode(const Chromosome& c, const BatchItem& item) const {
    if (!item.patches) return decode_apply(c, *item.image, grid_, tables_);
    if (c.size() != item.patches->regions.size())
        throw Error(ErrorCode::Config, "chromosome does not match the region grid");
    Tensor out = *item.image;
    const std::size_t levels = tables_.levels();
    const std::size_t w = out.width(), ch = out.channels();
    for (std::size_t r = 0; r < c.size(); ++r) {
        if (!c.mask[r]) continue;
        const Rect& rect = item.patches->regions[r];
        const auto& patch = item.patches->patches[r][c.operators[r] * levels + c.levels[r]].pixels;
        const std::size_t span = (rect.x1 - rect.x0) * ch;
        for (std::size_t y = rect.y0; y < rect.y1; ++y)
            std::copy_n(patch.begin() + static_cast<std::ptrdiff_t>((y - rect.y0) * span), span,
                        out.data.begin() + static_cast<std::ptrdiff_t>((y * w + rect.x0) * ch));
    }
    return out;
}

bool Evaluator::feasible(const Chromosome& c, std::span<const BatchItem> batch) const {
    for (const auto& item : batch) {
        if (item.patches) {
            const ImageDistance d = patched_distance(c, *item.patches);
            if (constraint_holds(d.l0, d.linf, item.image->size(), constraint_)) return true;
            continue;
        }
        const Tensor mutant = decode_apply(c, *item.image, grid_, tables_);
        if (check_constraint(*item.reference, mutant, constraint_)) return true;
    }
    return false;
}

Evaluation Evaluator::evaluate(const Chromosome& c, std::span<const BatchItem> batch,
                               const CoverageState& snapshot) const {
    Evaluation e;
    e.local = CoverageState::empty_for(*profile_);
    e.item_gain.assign(batch.size(), 0);
    std::size_t best_bits = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const BatchItem& item = batch[i];
        if (item.patches) {
            const ImageDistance d = patched_distance(c, *item.patches);
            if (!constraint_holds(d.l0, d.linf, item.image->size(), constraint_)) continue;
            e.feasible = true;
            if (!patched_changes(c, *item.patches)) continue;
        }
        Tensor mutant = decode(c, item);
        if (!item.patches) {
            if (!check_constraint(*item.reference, mutant, constraint_)) continue;
            e.feasible = true;
            if (mutant == *item.image) continue;
        }

        const ActivationTrace trace = forward(*model_, mutant);
        ++e.forwards;
        ++e.mutants;
        const bool adversarial = trace.predicted_label != item.label;
        const CoverageDelta delta = update_against(e.local, snapshot, *profile_, trace.values);
        e.item_gain[i] += delta.total();
        if (adversarial) {
            ++e.adversarial;
            if (!e.adversarial_example)
                e.adversarial_example = Mutant{mutant, i, trace.predicted_label};
        }
        if (delta.total() > best_bits) {
            best_bits = delta.total();
            e.best = Mutant{std::move(mutant), i, trace.predicted_label};
        }
    }
    e.gain = gain_over(e.local, snapshot);
    return e;
}

}  // namespace covfuzz
