#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace covfuzz {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape);

/// Dense float tensor, row-major with channel-last layout (H x W x C for images).
struct Tensor {
    Shape shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(element_count(shape), 0.0f) {}
    Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {}

    std::size_t size() const { return data.size(); }
    std::span<const float> values() const { return data; }
    std::span<float> values() { return data; }

    // Image accessors; only meaningful for rank-3 tensors.
    std::size_t height() const { return shape.at(0); }
    std::size_t width() const { return shape.at(1); }
    std::size_t channels() const { return shape.at(2); }
    float& at(std::size_t y, std::size_t x, std::size_t c) {
        return data[(y * shape[1] + x) * shape[2] + c];
    }
    float at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * shape[1] + x) * shape[2] + c];
    }

    bool operator==(const Tensor&) const = default;
};

}  // namespace covfuzz
