#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "covfuzz/error.hpp"
#include "covfuzz/fixtures.hpp"
#include "covfuzz/mutation.hpp"
#include "test_support.hpp"

using namespace cftest;

namespace {

// Plain 2-D box filter with coordinates clamped to the region.
Tensor reference_blur(const Tensor& img, const Rect& r, int size) {
    Tensor out = img;
    if (size <= 1) return out;
    const long lo = -(size - 1) / 2, hi = size / 2;
    for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x)
            for (std::size_t c = 0; c < img.channels(); ++c) {
                double sum = 0.0;
                for (long dy = lo; dy <= hi; ++dy)
                    for (long dx = lo; dx <= hi; ++dx) {
                        const long yy = std::clamp<long>(static_cast<long>(y) + dy, r.y0, r.y1 - 1);
                        const long xx = std::clamp<long>(static_cast<long>(x) + dx, r.x0, r.x1 - 1);
                        sum += img.at(yy, xx, c);
                    }
                out.at(y, x, c) = static_cast<float>(std::clamp(sum / (size * size), 0.0, 255.0));
            }
    return out;
}

Tensor pixel_image(std::size_t h, std::size_t w, float fill) {
    Tensor t({h, w, 1});
    std::fill(t.data.begin(), t.data.end(), fill);
    return t;
}

Rect random_rect(std::size_t h, std::size_t w, Rng& rng) {
    Rect r;
    r.y0 = rng.below(h);
    r.x0 = rng.below(w);
    r.y1 = r.y0 + 1 + rng.below(h - r.y0);
    r.x1 = r.x0 + 1 + rng.below(w - r.x0);
    return r;
}

}  // namespace

TEST(RegionGrid, PartitionsImage) {
    for (auto [h, w, rows, cols] : {std::array<std::size_t, 4>{28, 28, 3, 3}, {32, 30, 3, 3}, {10, 7, 2, 2},
                                    {5, 9, 1, 4}, {28, 28, 2, 2}}) {
        const RegionGrid g(h, w, rows, cols);
        std::vector<int> hits(h * w, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Rect r = g.region(i);
            for (std::size_t y = r.y0; y < r.y1; ++y)
                for (std::size_t x = r.x0; x < r.x1; ++x) ++hits[y * w + x];
        }
        EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int n) { return n == 1; }));
    }
    EXPECT_EQ(RegionGrid::for_image(20, 28).size(), 4u);
    EXPECT_EQ(RegionGrid::for_image(28, 28).size(), 9u);
    EXPECT_THROW(RegionGrid(28, 28, 3, 3).region(9), Error);
}

TEST(Apply, ZeroBrightnessIsIdentity) {
    MutationTables t;
    t.brightness = {0, 0, 0, 0, 0};
    Rng rng(1);
    const Tensor img = random_image({8, 8, 1}, rng);
    EXPECT_EQ(apply(img, {0, 0, 8, 8}, {Operator::Brightness, 2}, t), img);
}

TEST(Apply, BrightnessClamps) {
    MutationTables t;
    Tensor img = pixel_image(4, 4, 100.0f);
    img.at(1, 1, 0) = 250.0f;
    const Tensor out = apply(img, {0, 0, 2, 2}, {Operator::Brightness, 3}, t);  // +20
    EXPECT_EQ(out.at(1, 1, 0), 255.0f);
    EXPECT_EQ(out.at(0, 0, 0), 120.0f);
    EXPECT_EQ(out.at(3, 3, 0), 100.0f);
}

TEST(Apply, ContrastAboutPivot) {
    MutationTables t;
    Tensor img = pixel_image(2, 2, 127.5f);
    img.at(0, 0, 0) = 27.5f;
    const Tensor out = apply(img, {0, 0, 2, 2}, {Operator::Contrast, 4}, t);  // 1.5
    EXPECT_FLOAT_EQ(out.at(0, 0, 0), 0.0f);  // 127.5 - 1.5 * 100 clamps
    EXPECT_FLOAT_EQ(out.at(1, 1, 0), 127.5f);
    const Tensor soft = apply(img, {0, 0, 2, 2}, {Operator::Contrast, 0}, t);  // 0.6
    EXPECT_FLOAT_EQ(soft.at(0, 0, 0), 127.5f - 60.0f);
}

TEST(Apply, BlurOfConstantRegionIsIdentity) {
    MutationTables t;
    const Tensor img = pixel_image(9, 9, 77.0f);
    for (std::size_t level = 0; level < t.levels(); ++level)
        EXPECT_EQ(apply(img, {2, 1, 8, 7}, {Operator::Blur, level}, t), img);
}

TEST(Apply, BlurMatchesReference) {
    MutationTables t;
    Rng rng(4);
    for (int c = 0; c < 200; ++c) {
        const Shape shape{12, 11, c % 3 == 0 ? 3u : 1u};
        const Tensor img = random_image(shape, rng);
        const Rect r = random_rect(12, 11, rng);
        const std::size_t level = rng.below(t.levels());
        const Tensor got = apply(img, r, {Operator::Blur, level}, t);
        const Tensor want = reference_blur(img, r, t.blur[level]);
        for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got.data[i], want.data[i], 1e-3);
    }
}

TEST(Apply, LocalityAndRange) {
    MutationTables t;
    Rng rng(7);
    for (int c = 0; c < 300; ++c) {
        const Tensor img = random_image({10, 13, 2}, rng);
        const Rect r = random_rect(10, 13, rng);
        const MutationOp op{static_cast<Operator>(rng.below(3)), rng.below(t.levels())};
        const Tensor out = apply(img, r, op, t);
        for (std::size_t y = 0; y < 10; ++y)
            for (std::size_t x = 0; x < 13; ++x)
                for (std::size_t ch = 0; ch < 2; ++ch) {
                    const float v = out.at(y, x, ch);
                    ASSERT_TRUE(v >= 0.0f && v <= 255.0f);
                    if (!r.contains(y, x)) { ASSERT_EQ(v, img.at(y, x, ch)); }
                }
    }
}

TEST(Apply, BrightnessCommutesWhenNotSaturating) {
    MutationTables t;
    Rng rng(9);
    for (int c = 0; c < 50; ++c) {
        Tensor img = random_image({6, 6, 1}, rng, 60.0, 190.0);
        for (float& v : img.data) v = std::round(v);  // byte-valued, as loaded images are
        const Rect r{0, 0, 6, 6};
        const MutationOp a{Operator::Brightness, rng.below(5)}, b{Operator::Brightness, rng.below(5)};
        EXPECT_EQ(apply(apply(img, r, a, t), r, b, t), apply(apply(img, r, b, t), r, a, t));
    }
}

TEST(Apply, Errors) {
    MutationTables t;
    const Tensor img = pixel_image(4, 4, 1.0f);
    try {
        apply(img, {0, 0, 5, 4}, {Operator::Brightness, 0}, t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RegionOutOfBounds);
    }
    EXPECT_THROW(apply(img, {0, 0, 4, 4}, {Operator::Blur, 5}, t), Error);
    MutationTables bad;
    bad.blur.pop_back();
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Constraint, WorkedCases) {
    const ConstraintParams p{0.02, 0.2};
    const Tensor a = pixel_image(10, 10, 100.0f);
    EXPECT_TRUE(check_constraint(a, a, p));

    Tensor one = a;
    one.at(3, 3, 0) = 255.0f;
    EXPECT_TRUE(check_constraint(a, one, p));

    Tensor fifty = a;
    for (std::size_t i = 0; i < 50; ++i) fifty.data[i] += i == 0 ? 60.0f : 10.0f;
    EXPECT_FALSE(check_constraint(a, fifty, p));
}

TEST(Constraint, TruthTable) {
    const ConstraintParams p{0.02, 0.2};
    const Tensor a = pixel_image(10, 10, 100.0f);
    // few changes: any L-infinity up to 255 passes
    Tensor few = a;
    few.data[0] = 0.0f;
    EXPECT_TRUE(check_constraint(a, few, p));
    EXPECT_TRUE(constraint_holds(1, 255.0, 100, p));
    EXPECT_FALSE(constraint_holds(1, 255.5, 100, p));
    // many changes: only small L-infinity passes
    Tensor small = a, large = a;
    for (std::size_t i = 0; i < 2; ++i) {
        small.data[i] += 50.0f;
        large.data[i] += 51.0f;
    }
    EXPECT_TRUE(check_constraint(a, small, p));
    EXPECT_FALSE(check_constraint(a, large, p));
    EXPECT_THROW(check_constraint(a, pixel_image(5, 5, 0.0f), p), Error);
}

TEST(Constraint, ParamsValidated) {
    EXPECT_THROW((ConstraintParams{0.0, 0.2}.validate()), Error);
    EXPECT_THROW((ConstraintParams{0.2, 1.0}.validate()), Error);
    EXPECT_NO_THROW((ConstraintParams{0.02, 0.2}.validate()));
}

TEST(Distance, Definitions) {
    const Tensor a = pixel_image(3, 3, 10.0f);
    Tensor b = a;
    b.data[2] = 4.0f;
    b.data[5] = 30.0f;
    const ImageDistance d = image_distance(a, b);
    EXPECT_EQ(d.l0, 2u);
    EXPECT_EQ(d.linf, 20.0f);
}

class SequenceTest : public ::testing::Test {
protected:
    Model model = generate_fixture_model("tiny-dense", 3);
    NeuronProfile prof;
    MutationContext ctx;
    RegionGrid grid = RegionGrid::for_image(28, 28);
    Tensor seed;

    void SetUp() override {
        Rng rng(5);
        std::vector<Tensor> set;
        for (int i = 0; i < 20; ++i) set.push_back(random_image(model.input_shape(), rng));
        prof = profile(model, set, 10);
        seed = random_image(model.input_shape(), rng);
        ctx.model = &model;
        ctx.profile = &prof;
    }
};

TEST_F(SequenceTest, IdentityOperatorsProduceNothing) {
    ctx.tables.brightness.assign(5, 0.0f);
    ctx.tables.contrast.assign(5, 1.0f);
    ctx.tables.blur.assign(5, 1);
    CoverageState s = CoverageState::empty_for(prof);
    Rng rng(1);
    const auto seq = mutate_sequence(seed, ctx, grid, s, 10, rng);
    EXPECT_TRUE(seq.mutants.empty());
    EXPECT_EQ(seq.forwards, 0u);
}

TEST_F(SequenceTest, SingleStep) {
    ctx.constraint = {0.9, 0.9};
    CoverageState s = CoverageState::empty_for(prof);
    Rng rng(2);
    const auto seq = mutate_sequence(seed, ctx, grid, s, 1, rng);
    ASSERT_EQ(seq.mutants.size(), 1u);
    EXPECT_TRUE(seq.gains[0].any());
    EXPECT_NE(seq.mutants[0], seed);
}

TEST_F(SequenceTest, DeterministicAndConstrained) {
    auto run = [&](std::uint64_t seed_value) {
        CoverageState s = CoverageState::empty_for(prof);
        Rng rng(seed_value);
        return mutate_sequence(seed, ctx, grid, s, 10, rng);
    };
    const auto a = run(42), b = run(42);
    EXPECT_EQ(a.mutants, b.mutants);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.forwards, a.mutants.size());
    for (const auto& m : a.mutants) {
        EXPECT_TRUE(check_constraint(seed, m, ctx.constraint));
        EXPECT_NE(m, seed);
    }
    // Every step but the last added coverage.
    for (std::size_t i = 0; i + 1 < a.gains.size(); ++i) EXPECT_TRUE(a.gains[i].any());
}
