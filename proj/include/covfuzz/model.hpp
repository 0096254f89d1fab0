#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "covfuzz/tensor.hpp"

namespace covfuzz {

enum class LayerKind { Dense, Conv2d, MaxPool2d, Relu, Flatten, Softmax };
enum class Activation { None, Relu };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

/// One sequential layer. Only the fields relevant to `kind` are meaningful.
///
/// Weight layouts keep the output index innermost so the hot loops stream
/// over contiguous memory:
///   dense:  weights[in][out]
///   conv2d: weights[kh][kw][cin][cout]  (valid padding only)
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t window = 0;
    std::size_t stride = 1;
    Activation activation = Activation::None;
    bool traced = false;
    std::vector<float> weights;
    std::vector<float> bias;

    static LayerSpec dense(std::size_t in, std::size_t out, Activation act, bool traced);
    static LayerSpec conv2d(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
                            std::size_t stride, Activation act, bool traced);
    static LayerSpec maxpool2d(std::size_t window, std::size_t stride);
    static LayerSpec relu(bool traced = false);
    static LayerSpec flatten();
    static LayerSpec softmax();

    /// Number of weights (excluding bias) implied by the declared dimensions.
    std::size_t expected_weight_count() const;
    std::size_t expected_bias_count() const;
    bool has_parameters() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }

    bool operator==(const LayerSpec&) const = default;
};

/// Validated, immutable sequential network. Construction checks the shape
/// algebra, weight lengths and finiteness; a constructed Model never fails
/// at inference time except on a wrong input shape.
inline constexpr std::size_t kConvBlock = 32;

/// Row length of the tiled conv taps: ow * cout rounded up to kConvBlock.
inline std::size_t conv_row_stride(std::size_t ow, std::size_t cout) {
    return (ow * cout + kConvBlock - 1) / kConvBlock * kConvBlock;
}

class Model {
public:
    Model(std::string name, Shape input_shape, std::vector<LayerSpec> layers,
          float input_scale = 1.0f);

    const std::string& name() const { return name_; }
    const Shape& input_shape() const { return input_shape_; }
    /// Inputs are multiplied by this factor before the first layer.
    float input_scale() const { return input_scale_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const Shape& output_shape(std::size_t layer) const { return shapes_.at(layer); }
    const Shape& output_shape() const { return shapes_.back(); }

    std::vector<std::size_t> traced_layers() const;
    /// Offset of a traced layer's first neuron in the global neuron index.
    std::size_t neuron_offset(std::size_t layer) const { return offsets_.at(layer); }
    std::size_t neuron_count() const { return neuron_count_; }
    /// Conv weights laid out for row-at-a-time accumulation (empty for other layers).
    const std::vector<float>& conv_taps(std::size_t layer) const { return conv_taps_[layer]; }

    bool operator==(const Model& other) const {
        return name_ == other.name_ && input_shape_ == other.input_shape_ &&
               input_scale_ == other.input_scale_ && layers_ == other.layers_;
    }

private:
    std::string name_;
    Shape input_shape_;
    float input_scale_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> shapes_;
    std::vector<std::size_t> offsets_;
    std::size_t neuron_count_ = 0;
    std::vector<std::vector<float>> conv_taps_;
};

std::size_t neuron_count(const Model& model);

struct ActivationTrace {
    /// Post-activation value per neuron, layer-major then row-major within a layer.
    std::vector<float> values;
    /// Output of the final layer.
    std::vector<float> logits;
    int predicted_label = 0;
};

/// Index of the largest element; ties go to the lowest index.
int argmax(std::span<const float> values);

/// Deterministic inference. Throws Error{ShapeMismatch} if the input shape
/// differs from the model's input shape.
ActivationTrace forward(const Model& model, const Tensor& input);

}  // namespace covfuzz
