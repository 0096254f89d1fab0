#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "covfuzz/model.hpp"

namespace covfuzz {

/// Architectures available as seeded random-weight stand-ins for trained models.
///
///   mini-lenet  28x28x1: conv5x5x4(relu, traced) pool2 flatten dense16(relu, traced)
///               dense10(traced) softmax                      -> 2330 neurons
///   tiny-dense  28x28x1: flatten dense32(relu, traced) dense10(traced) softmax -> 42
///   mini-cifar  32x32x3: conv3x3x8 pool2 conv3x3x8 pool2 flatten dense32 dense10
///
/// Weights and biases are drawn uniformly from [-0.5, 0.5]; pixel inputs in
/// [0, 255] are rescaled by 1/255 on entry.
Model generate_fixture_model(std::string_view arch_name, std::uint64_t rng_seed);

const std::vector<std::string>& fixture_architectures();

}  // namespace covfuzz
