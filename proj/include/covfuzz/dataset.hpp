#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "covfuzz/tensor.hpp"

namespace covfuzz {

struct Dataset {
    std::vector<Tensor> images;  // H x W x C, values in [0, 255]
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image file (unsigned bytes, n x rows x cols).
std::vector<Tensor> parse_idx_images(std::string_view bytes);
std::vector<int> parse_idx_labels(std::string_view bytes);
/// Pairs images with labels; counts must agree.
Dataset parse_idx(std::string_view image_bytes, std::string_view label_bytes);

/// Pixels are rounded and clamped to bytes; images must be single-channel.
std::string encode_idx_images(const std::vector<Tensor>& images);
std::string encode_idx_labels(const std::vector<int>& labels);

/// MNIST naming: the labels file sits next to the images file with
/// "images-idx3" replaced by "labels-idx1". Without a labels file every label is 0.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels = {});

/// Seeded stroke drawings on a dark background, loosely digit-like.
Dataset synthetic_dataset(std::size_t count, const Shape& shape, std::uint64_t seed);

}  // namespace covfuzz
