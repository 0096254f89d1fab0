#include "covfuzz/mutation.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <vector>

#include "covfuzz/error.hpp"

namespace covfuzz {

RegionGrid::RegionGrid(std::size_t height, std::size_t width, std::size_t rows, std::size_t cols)
    : height_(height), width_(width), rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0 || rows > height || cols > width)
        throw Error(ErrorCode::Config, "region grid does not fit the image");
}

RegionGrid RegionGrid::for_image(std::size_t height, std::size_t width) {
    const std::size_t n = std::min(height, width) < 24 ? 2 : 3;
    return RegionGrid(height, width, n, n);
}

Rect RegionGrid::region(std::size_t index) const {
    if (index >= size()) throw Error(ErrorCode::RegionOutOfBounds, "region index out of range");
    const std::size_t r = index / cols_;
    const std::size_t c = index % cols_;
    const std::size_t cell_h = height_ / rows_;
    const std::size_t cell_w = width_ / cols_;
    Rect rect;
    rect.y0 = r * cell_h;
    rect.x0 = c * cell_w;
    rect.y1 = r + 1 == rows_ ? height_ : (r + 1) * cell_h;
    rect.x1 = c + 1 == cols_ ? width_ : (c + 1) * cell_w;
    return rect;
}

void MutationTables::validate() const {
    const std::size_t l = brightness.size();
    if (l == 0 || contrast.size() != l || blur.size() != l)
        throw Error(ErrorCode::Config, "mutation level tables must be non-empty and equally long");
    for (int s : blur)
        if (s < 1) throw Error(ErrorCode::Config, "blur kernel sizes must be >= 1");
    for (float g : contrast)
        if (!(g >= 0.0f) || !std::isfinite(g))
            throw Error(ErrorCode::Config, "contrast factors must be finite and non-negative");
    for (float d : brightness)
        if (!std::isfinite(d)) throw Error(ErrorCode::Config, "brightness offsets must be finite");
}

void ConstraintParams::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
        throw Error(ErrorCode::Config, "alpha and beta must lie strictly between 0 and 1");
}

namespace {

inline float clamp_pixel(float v) { return std::clamp(v, 0.0f, 255.0f); }

void check_region(const Tensor& image, const Rect& r) {
    if (image.shape.size() != 3 || r.y0 >= r.y1 || r.x0 >= r.x1 || r.y1 > image.height() ||
        r.x1 > image.width())
        throw Error(ErrorCode::RegionOutOfBounds, "mutation region outside the image");
}

// Calls fn(row pointer, value count) for each row of the region, channels interleaved.
template <class Fn>
void for_each_row(Tensor& image, const Rect& r, Fn&& fn) {
    const std::size_t w = image.width(), ch = image.channels();
    for (std::size_t y = r.y0; y < r.y1; ++y) fn(image.data.data() + (y * w + r.x0) * ch, (r.x1 - r.x0) * ch);
}

void box_blur(Tensor& image, const Rect& r, int size) {
    if (size <= 1) return;
    const std::size_t channels = image.channels();
    const std::size_t w = image.width();
    const std::size_t rh = r.y1 - r.y0, rw = r.x1 - r.x0;
    // Window covers offsets [-(s-1)/2, s/2]; coordinates clamp to the region edge.
    // Separable: row sums first, then column sums of those.
    const long lo = -static_cast<long>((size - 1) / 2);
    const long hi = size / 2;
    thread_local std::vector<double> rows;
    rows.assign(rh * rw * channels, 0.0);
    const float* src = image.data.data();
    for (std::size_t y = 0; y < rh; ++y)
        for (std::size_t x = 0; x < rw; ++x)
            for (std::size_t c = 0; c < channels; ++c) {
                double sum = 0.0;
                for (long dx = lo; dx <= hi; ++dx) {
                    const long xx = std::clamp(static_cast<long>(x) + dx, 0L, static_cast<long>(rw) - 1);
                    sum += src[((r.y0 + y) * w + r.x0 + static_cast<std::size_t>(xx)) * channels + c];
                }
                rows[(y * rw + x) * channels + c] = sum;
            }
    const double norm = static_cast<double>(size) * size;
    float* dst = image.data.data();
    for (std::size_t y = 0; y < rh; ++y)
        for (std::size_t x = 0; x < rw; ++x)
            for (std::size_t c = 0; c < channels; ++c) {
                double sum = 0.0;
                for (long dy = lo; dy <= hi; ++dy) {
                    const long yy = std::clamp(static_cast<long>(y) + dy, 0L, static_cast<long>(rh) - 1);
                    sum += rows[(static_cast<std::size_t>(yy) * rw + x) * channels + c];
                }
                dst[((r.y0 + y) * w + r.x0 + x) * channels + c] = clamp_pixel(static_cast<float>(sum / norm));
            }
}

}  // namespace

void apply_in_place(Tensor& image, const Rect& region, const MutationOp& op,
                    const MutationTables& tables) {
    check_region(image, region);
    if (op.level >= tables.levels()) throw Error(ErrorCode::Config, "mutation level out of range");
    switch (op.op) {
    case Operator::Brightness: {
        const float delta = tables.brightness[op.level];
        for_each_row(image, region, [&](float* p, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) p[i] = clamp_pixel(p[i] + delta);
        });
        break;
    }
    case Operator::Contrast: {
        const float gamma = tables.contrast[op.level];
        for_each_row(image, region, [&](float* p, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) p[i] = clamp_pixel(kContrastPivot + gamma * (p[i] - kContrastPivot));
        });
        break;
    }
    case Operator::Blur:
        box_blur(image, region, tables.blur[op.level]);
        break;
    }
}

Tensor apply(const Tensor& image, const Rect& region, const MutationOp& op,
             const MutationTables& tables) {
    Tensor out = image;
    apply_in_place(out, region, op, tables);
    return out;
}

ImageDistance image_distance(const Tensor& original, const Tensor& mutated) {
    if (original.shape != mutated.shape)
        throw Error(ErrorCode::ShapeMismatch, "constraint check on images of different shapes");
    // Absolute differences are non-negative, so their bit patterns order like the values.
    const float* a = original.data.data();
    const float* b = mutated.data.data();
    std::size_t l0 = 0;
    std::uint32_t top = 0;
    for (std::size_t i = 0; i < original.data.size(); ++i) {
        l0 += a[i] != b[i];
        top = std::max(top, std::bit_cast<std::uint32_t>(std::fabs(a[i] - b[i])));
    }
    ImageDistance d;
    d.l0 = l0;
    d.linf = std::bit_cast<float>(top);
    return d;
}

bool constraint_holds(std::size_t l0, double linf, std::size_t size, const ConstraintParams& params) {
    if (static_cast<double>(l0) < params.alpha * static_cast<double>(size)) return linf <= 255.0;
    return linf < params.beta * 255.0;
}

bool check_constraint(const Tensor& original, const Tensor& mutated, const ConstraintParams& params) {
    const ImageDistance d = image_distance(original, mutated);
    return constraint_holds(d.l0, d.linf, original.size(), params);
}

MutationSequence mutate_sequence(const Tensor& seed_image, const Tensor& reference,
                                 const MutationContext& ctx, const RegionGrid& grid,
                                 CoverageState& state, std::size_t max_steps, Rng& rng) {
    MutationSequence out;
    Tensor current = seed_image;
    for (std::size_t step = 0; step < max_steps; ++step) {
        const Rect region = grid.region(rng.below(grid.size()));
        MutationOp op;
        op.op = static_cast<Operator>(rng.below(kOperatorCount));
        op.level = rng.below(ctx.tables.levels());
        Tensor candidate = apply(current, region, op, ctx.tables);
        if (!check_constraint(reference, candidate, ctx.constraint)) break;
        // An unchanged image cannot add coverage; skip the forward pass and stop.
        if (candidate == current || candidate == seed_image) break;
        const ActivationTrace trace = forward(*ctx.model, candidate);
        ++out.forwards;
        const CoverageDelta gain = update(state, *ctx.profile, trace.values);
        out.mutants.push_back(candidate);
        out.labels.push_back(trace.predicted_label);
        out.gains.push_back(gain);
        if (!gain.any()) break;
        current = std::move(candidate);
    }
    return out;
}

}  // namespace covfuzz
