#include "covfuzz/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "covfuzz/error.hpp"

namespace covfuzz {

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Softmax: return "softmax";
    }
    return "unknown";
}

std::string to_string(Activation act) { return act == Activation::Relu ? "relu" : "none"; }

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out, Activation act, bool traced) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in_dim = in;
    l.out_dim = out;
    l.activation = act;
    l.traced = traced;
    l.weights.assign(in * out, 0.0f);
    l.bias.assign(out, 0.0f);
    return l;
}

LayerSpec LayerSpec::conv2d(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
                            std::size_t stride, Activation act, bool traced) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.in_channels = cin;
    l.out_channels = cout;
    l.stride = stride;
    l.activation = act;
    l.traced = traced;
    l.weights.assign(kh * kw * cin * cout, 0.0f);
    l.bias.assign(cout, 0.0f);
    return l;
}

LayerSpec LayerSpec::maxpool2d(std::size_t window, std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool2d;
    l.window = window;
    l.stride = stride;
    return l;
}

LayerSpec LayerSpec::relu(bool traced) {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    l.traced = traced;
    return l;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec l;
    l.kind = LayerKind::Softmax;
    return l;
}

std::size_t LayerSpec::expected_weight_count() const {
    switch (kind) {
    case LayerKind::Dense: return in_dim * out_dim;
    case LayerKind::Conv2d: return kernel_h * kernel_w * in_channels * out_channels;
    default: return 0;
    }
}

std::size_t LayerSpec::expected_bias_count() const {
    switch (kind) {
    case LayerKind::Dense: return out_dim;
    case LayerKind::Conv2d: return out_channels;
    default: return 0;
    }
}

namespace {

[[noreturn]] void fail_layer(ErrorCode code, std::size_t layer, const std::string& what) {
    throw Error(code, "layer " + std::to_string(layer) + ": " + what);
}

Shape infer_output(const LayerSpec& l, const Shape& in, std::size_t index) {
    switch (l.kind) {
    case LayerKind::Dense:
        if (in.size() != 1 || in[0] != l.in_dim)
            fail_layer(ErrorCode::DimensionMismatch, index,
                       "dense expects [" + std::to_string(l.in_dim) + "] but receives " +
                           to_string(in));
        if (l.out_dim == 0) fail_layer(ErrorCode::DimensionMismatch, index, "dense out_dim is 0");
        return {l.out_dim};
    case LayerKind::Conv2d: {
        if (in.size() != 3 || in[2] != l.in_channels)
            fail_layer(ErrorCode::DimensionMismatch, index,
                       "conv2d expects HxWx" + std::to_string(l.in_channels) + " but receives " +
                           to_string(in));
        if (l.kernel_h == 0 || l.kernel_w == 0 || l.stride == 0 || l.out_channels == 0)
            fail_layer(ErrorCode::DimensionMismatch, index, "conv2d has a zero dimension");
        if (in[0] < l.kernel_h || in[1] < l.kernel_w)
            fail_layer(ErrorCode::DimensionMismatch, index, "conv2d kernel larger than input");
        return {(in[0] - l.kernel_h) / l.stride + 1, (in[1] - l.kernel_w) / l.stride + 1,
                l.out_channels};
    }
    case LayerKind::MaxPool2d:
        if (in.size() != 3)
            fail_layer(ErrorCode::DimensionMismatch, index,
                       "maxpool2d expects HxWxC but receives " + to_string(in));
        if (l.window == 0 || l.stride == 0 || in[0] < l.window || in[1] < l.window)
            fail_layer(ErrorCode::DimensionMismatch, index, "maxpool2d window does not fit input");
        return {(in[0] - l.window) / l.stride + 1, (in[1] - l.window) / l.stride + 1, in[2]};
    case LayerKind::Relu:
        return in;
    case LayerKind::Flatten:
        return {element_count(in)};
    case LayerKind::Softmax:
        if (in.size() != 1)
            fail_layer(ErrorCode::DimensionMismatch, index,
                       "softmax expects a vector but receives " + to_string(in));
        return in;
    }
    fail_layer(ErrorCode::MalformedHeader, index, "unknown layer kind");
}

}  // namespace

Model::Model(std::string name, Shape input_shape, std::vector<LayerSpec> layers, float input_scale)
    : name_(std::move(name)),
      input_shape_(std::move(input_shape)),
      input_scale_(input_scale),
      layers_(std::move(layers)) {
    if (layers_.empty()) throw Error(ErrorCode::NoLayers, "model has no layers");
    if (input_shape_.empty() || element_count(input_shape_) == 0)
        throw Error(ErrorCode::DimensionMismatch, "model input shape is empty");
    if (!std::isfinite(input_scale_))
        throw Error(ErrorCode::NonFiniteWeight, "input scale is not finite");

    Shape current = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        if (l.weights.size() != l.expected_weight_count() ||
            l.bias.size() != l.expected_bias_count())
            fail_layer(ErrorCode::WeightLengthMismatch, i,
                       "weight length mismatch at layer " + std::to_string(i));
        for (float w : l.weights)
            if (!std::isfinite(w)) fail_layer(ErrorCode::NonFiniteWeight, i, "non-finite weight");
        for (float b : l.bias)
            if (!std::isfinite(b)) fail_layer(ErrorCode::NonFiniteWeight, i, "non-finite bias");
        if (l.traced && l.kind != LayerKind::Dense && l.kind != LayerKind::Conv2d &&
            l.kind != LayerKind::Relu)
            fail_layer(ErrorCode::DimensionMismatch, i,
                       to_string(l.kind) + " layers cannot be traced");
        current = infer_output(l, current, i);
        shapes_.push_back(current);
        offsets_.push_back(neuron_count_);
        if (l.traced) neuron_count_ += element_count(current);
    }

    // Each kernel tap's cout weights tiled across one output row.
    conv_taps_.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        if (l.kind != LayerKind::Conv2d) continue;
        const std::size_t ow = shapes_[i][1];
        const std::size_t row_len = conv_row_stride(ow, l.out_channels);
        const std::size_t taps = l.kernel_h * l.kernel_w * l.in_channels;
        auto& tiled = conv_taps_[i];
        tiled.assign(taps * row_len, 0.0f);
        for (std::size_t t = 0; t < taps; ++t)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t co = 0; co < l.out_channels; ++co)
                    tiled[t * row_len + ox * l.out_channels + co] = l.weights[t * l.out_channels + co];
    }
}

std::vector<std::size_t> Model::traced_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].traced) out.push_back(i);
    return out;
}

std::size_t neuron_count(const Model& model) { return model.neuron_count(); }

int argmax(std::span<const float> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

namespace {

void apply_activation(Activation act, std::vector<float>& v) {
    if (act == Activation::Relu)
        for (float& x : v) x = x > 0.0f ? x : 0.0f;
}

void run_dense(const LayerSpec& l, const std::vector<float>& in, std::vector<float>& out) {
    out.assign(l.bias.begin(), l.bias.end());
    const float* w = l.weights.data();
    for (std::size_t i = 0; i < l.in_dim; ++i) {
        const float x = in[i];
        const float* row = w + i * l.out_dim;
        for (std::size_t o = 0; o < l.out_dim; ++o) out[o] += x * row[o];
    }
    apply_activation(l.activation, out);
}

template <std::size_t C>
void spread_row(float* dst, const float* src, std::size_t width, std::size_t stride) {
    for (std::size_t x = 0; x < width; ++x) {
        const float v = src[x * stride];
        for (std::size_t co = 0; co < C; ++co) dst[x * C + co] = v;
    }
}

void run_conv(const LayerSpec& l, const std::vector<float>& taps, const Shape& in_shape,
              const std::vector<float>& in, const Shape& out_shape, std::vector<float>& out) {
    const std::size_t in_h = in_shape[0];
    const std::size_t in_w = in_shape[1];
    const std::size_t cin = l.in_channels;
    const std::size_t cout = l.out_channels;
    const std::size_t oh = out_shape[0];
    const std::size_t ow = out_shape[1];
    const std::size_t row_len = ow * cout;
    const std::size_t padded = conv_row_stride(ow, cout);
    const std::size_t kw = l.kernel_w;
    const std::size_t ntaps = l.kernel_h * kw * cin;
    out.resize(oh * row_len);

    // Output rows are accumulated as flat (x, cout) vectors: input values are
    // repeated cout times per channel plane and multiplied against kernel
    // taps tiled across the row. Blocks of kConvBlock stay in registers while
    // every tap is applied.
    const std::size_t span = std::max(in_w * cout, (kw - 1) * cout + padded) + kConvBlock;
    thread_local std::vector<float> spread;
    spread.resize(in_h * cin * span);
    for (std::size_t y = 0; y < in_h; ++y)
        for (std::size_t ci = 0; ci < cin; ++ci) {
            float* dst = &spread[(y * cin + ci) * span];
            const float* src = &in[y * in_w * cin + ci];
            switch (cout) {
            case 4: spread_row<4>(dst, src, in_w, cin); break;
            case 6: spread_row<6>(dst, src, in_w, cin); break;
            case 8: spread_row<8>(dst, src, in_w, cin); break;
            case 16: spread_row<16>(dst, src, in_w, cin); break;
            case 32: spread_row<32>(dst, src, in_w, cin); break;
            default:
                for (std::size_t x = 0; x < in_w; ++x)
                    for (std::size_t co = 0; co < cout; ++co) dst[x * cout + co] = src[x * cin];
            }
            std::fill(dst + in_w * cout, dst + span, 0.0f);
        }

    thread_local std::vector<const float*> rows;
    rows.resize(ntaps);
    thread_local std::vector<float> bias_row;
    bias_row.assign(padded, 0.0f);
    for (std::size_t j = 0; j < row_len; ++j) bias_row[j] = l.bias[j % cout];
    for (std::size_t ky = 0, t = 0; ky < l.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx)
            for (std::size_t ci = 0; ci < cin; ++ci, ++t)
                rows[t] = &spread[(ky * cin + ci) * span + kx * cout];
    const std::size_t row_step = l.stride * cin * span;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        if (oy > 0)
            for (auto& r : rows) r += row_step;
        float* dst = &out[oy * row_len];
        for (std::size_t j0 = 0; j0 < padded; j0 += kConvBlock) {
            float acc[kConvBlock];
            if (l.stride == 1) {
                // Four 8-wide accumulators; GCC/Clang vector extensions.
                using v8 = float __attribute__((vector_size(32)));
                v8 a0, a1, a2, a3;
                std::memcpy(&a0, &bias_row[j0], sizeof a0);
                std::memcpy(&a1, &bias_row[j0 + 8], sizeof a1);
                std::memcpy(&a2, &bias_row[j0 + 16], sizeof a2);
                std::memcpy(&a3, &bias_row[j0 + 24], sizeof a3);
                for (std::size_t t = 0; t < ntaps; ++t) {
                    const float* src = rows[t] + j0;
                    const float* wt = &taps[t * padded + j0];
                    v8 s0, s1, s2, s3, w0, w1, w2, w3;
                    std::memcpy(&s0, src, sizeof s0);
                    std::memcpy(&s1, src + 8, sizeof s1);
                    std::memcpy(&s2, src + 16, sizeof s2);
                    std::memcpy(&s3, src + 24, sizeof s3);
                    std::memcpy(&w0, wt, sizeof w0);
                    std::memcpy(&w1, wt + 8, sizeof w1);
                    std::memcpy(&w2, wt + 16, sizeof w2);
                    std::memcpy(&w3, wt + 24, sizeof w3);
                    a0 += s0 * w0;
                    a1 += s1 * w1;
                    a2 += s2 * w2;
                    a3 += s3 * w3;
                }
                std::memcpy(acc, &a0, sizeof a0);
                std::memcpy(acc + 8, &a1, sizeof a1);
                std::memcpy(acc + 16, &a2, sizeof a2);
                std::memcpy(acc + 24, &a3, sizeof a3);
            } else {
                std::copy_n(&bias_row[j0], kConvBlock, acc);
                for (std::size_t t = 0; t < ntaps; ++t) {
                    const float* wt = &taps[t * padded + j0];
                    for (std::size_t j = 0; j < kConvBlock && j0 + j < row_len; ++j) {
                        const std::size_t ox = (j0 + j) / cout, co = (j0 + j) % cout;
                        acc[j] += rows[t][ox * l.stride * cout + co] * wt[j];
                    }
                }
            }
            const std::size_t n = std::min(kConvBlock, row_len - std::min(row_len, j0));
            std::copy_n(acc, n, dst + j0);
        }
    }
    apply_activation(l.activation, out);
}

void run_maxpool(const LayerSpec& l, const Shape& in_shape, const std::vector<float>& in,
                 const Shape& out_shape, std::vector<float>& out) {
    const std::size_t in_w = in_shape[1];
    const std::size_t c = in_shape[2];
    out.resize(element_count(out_shape));
    if (l.window == 2 && l.stride == 2) {
        for (std::size_t oy = 0; oy < out_shape[0]; ++oy)
            for (std::size_t ox = 0; ox < out_shape[1]; ++ox) {
                const float* a = &in[((2 * oy) * in_w + 2 * ox) * c];
                const float* b = a + in_w * c;
                float* o = &out[(oy * out_shape[1] + ox) * c];
                for (std::size_t ch = 0; ch < c; ++ch)
                    o[ch] = std::max(std::max(a[ch], a[c + ch]), std::max(b[ch], b[c + ch]));
            }
        return;
    }
    for (std::size_t oy = 0; oy < out_shape[0]; ++oy)
        for (std::size_t ox = 0; ox < out_shape[1]; ++ox)
            for (std::size_t ch = 0; ch < c; ++ch) {
                float best = in[((oy * l.stride) * in_w + ox * l.stride) * c + ch];
                for (std::size_t wy = 0; wy < l.window; ++wy)
                    for (std::size_t wx = 0; wx < l.window; ++wx)
                        best = std::max(
                            best, in[((oy * l.stride + wy) * in_w + ox * l.stride + wx) * c + ch]);
                out[(oy * out_shape[1] + ox) * c + ch] = best;
            }
}

void run_softmax(std::vector<float>& v) {
    const float peak = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    std::vector<double> e(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        e[i] = std::exp(static_cast<double>(v[i]) - peak);
        sum += e[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(e[i] / sum);
}

}  // namespace

ActivationTrace forward(const Model& model, const Tensor& input) {
    if (input.shape != model.input_shape())
        throw Error(ErrorCode::ShapeMismatch,
                    "layer 0: input shape " + to_string(input.shape) + " does not match model input " +
                        to_string(model.input_shape()));

    ActivationTrace trace;
    trace.values.reserve(model.neuron_count());

    // Layers ping-pong between two per-thread buffers that keep their capacity.
    thread_local std::vector<float> buffer_a, buffer_b;
    std::vector<float>* current = &buffer_a;
    std::vector<float>* next = &buffer_b;
    current->assign(input.data.begin(), input.data.end());
    if (model.input_scale() != 1.0f)
        for (float& x : *current) x *= model.input_scale();

    const auto& layers = model.layers();
    const Shape* in_shape = &model.input_shape();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const Shape& out_shape = model.output_shape(i);
        bool swap = true;
        switch (l.kind) {
        case LayerKind::Dense: run_dense(l, *current, *next); break;
        case LayerKind::Conv2d: run_conv(l, model.conv_taps(i), *in_shape, *current, out_shape, *next); break;
        case LayerKind::MaxPool2d: run_maxpool(l, *in_shape, *current, out_shape, *next); break;
        case LayerKind::Relu: apply_activation(Activation::Relu, *current); swap = false; break;
        case LayerKind::Flatten: swap = false; break;
        case LayerKind::Softmax: run_softmax(*current); swap = false; break;
        }
        if (swap) std::swap(current, next);
        if (l.traced) {
            // Traced layers are laid out in order, so appending fills each offset.
            if (trace.values.size() != model.neuron_offset(i))
                throw Error(ErrorCode::Invariant, "traced layers out of order");
            trace.values.insert(trace.values.end(), current->begin(), current->end());
        }
        in_shape = &out_shape;
    }
    trace.values.resize(model.neuron_count());
    trace.logits = *current;
    trace.predicted_label = argmax(trace.logits);
    return trace;
}

}  // namespace covfuzz
