#include "covfuzz/fixtures.hpp"

#include "covfuzz/error.hpp"
#include "covfuzz/random.hpp"

namespace covfuzz {

namespace {

constexpr float kPixelScale = 1.0f / 255.0f;

void fill_uniform(std::vector<LayerSpec>& layers, Rng& rng) {
    for (auto& l : layers) {
        for (float& w : l.weights) w = static_cast<float>(rng.uniform(-0.5, 0.5));
        for (float& b : l.bias) b = static_cast<float>(rng.uniform(-0.5, 0.5));
    }
}

}  // namespace

const std::vector<std::string>& fixture_architectures() {
    static const std::vector<std::string> names{"mini-lenet", "tiny-dense", "mini-cifar"};
    return names;
}

Model generate_fixture_model(std::string_view arch_name, std::uint64_t rng_seed) {
    std::vector<LayerSpec> layers;
    Shape input;
    if (arch_name == "mini-lenet") {
        input = {28, 28, 1};
        layers = {
            LayerSpec::conv2d(5, 5, 1, 4, 1, Activation::Relu, true),
            LayerSpec::maxpool2d(2, 2),
            LayerSpec::flatten(),
            LayerSpec::dense(12 * 12 * 4, 16, Activation::Relu, true),
            LayerSpec::dense(16, 10, Activation::None, true),
            LayerSpec::softmax(),
        };
    } else if (arch_name == "tiny-dense") {
        input = {28, 28, 1};
        layers = {
            LayerSpec::flatten(),
            LayerSpec::dense(28 * 28, 32, Activation::Relu, true),
            LayerSpec::dense(32, 10, Activation::None, true),
            LayerSpec::softmax(),
        };
    } else if (arch_name == "mini-cifar") {
        input = {32, 32, 3};
        layers = {
            LayerSpec::conv2d(3, 3, 3, 8, 1, Activation::Relu, true),
            LayerSpec::maxpool2d(2, 2),
            LayerSpec::conv2d(3, 3, 8, 8, 1, Activation::Relu, true),
            LayerSpec::maxpool2d(2, 2),
            LayerSpec::flatten(),
            LayerSpec::dense(6 * 6 * 8, 32, Activation::Relu, true),
            LayerSpec::dense(32, 10, Activation::None, true),
            LayerSpec::softmax(),
        };
    } else {
        throw Error(ErrorCode::UnknownArchitecture,
                    "unknown fixture architecture '" + std::string(arch_name) + "'");
    }
    Rng rng(rng_seed);
    fill_uniform(layers, rng);
    return Model(std::string(arch_name), std::move(input), std::move(layers), kPixelScale);
}

}  // namespace covfuzz
