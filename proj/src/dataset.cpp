#include "covfuzz/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "covfuzz/error.hpp"
#include "covfuzz/model_io.hpp"
#include "covfuzz/random.hpp"

namespace covfuzz {

namespace {

std::uint32_t read_be32(std::string_view bytes, std::size_t offset) {
    if (bytes.size() < offset + 4) throw Error(ErrorCode::TruncatedPayload, "truncated IDX header");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void append_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v >> 24));
    out.push_back(static_cast<char>(v >> 16));
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v));
}

void check_magic(std::string_view bytes, std::uint32_t expected) {
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != expected) throw Error(ErrorCode::BadIdxMagic, "bad IDX magic");
}

}  // namespace

std::vector<Tensor> parse_idx_images(std::string_view bytes) {
    check_magic(bytes, kIdxImageMagic);
    const std::size_t n = read_be32(bytes, 4);
    const std::size_t rows = read_be32(bytes, 8);
    const std::size_t cols = read_be32(bytes, 12);
    const std::size_t per_image = rows * cols;
    if (bytes.size() - 16 < n * per_image)
        throw Error(ErrorCode::TruncatedPayload, "IDX image payload truncated: expected " +
                                                     std::to_string(n * per_image) + " bytes");
    std::vector<Tensor> images;
    images.reserve(n);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 16);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t({rows, cols, 1});
        for (std::size_t j = 0; j < per_image; ++j) t.data[j] = static_cast<float>(p[i * per_image + j]);
        images.push_back(std::move(t));
    }
    return images;
}

std::vector<int> parse_idx_labels(std::string_view bytes) {
    check_magic(bytes, kIdxLabelMagic);
    const std::size_t n = read_be32(bytes, 4);
    if (bytes.size() - 8 < n) throw Error(ErrorCode::TruncatedPayload, "IDX label payload truncated");
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
    return labels;
}

Dataset parse_idx(std::string_view image_bytes, std::string_view label_bytes) {
    Dataset d;
    d.images = parse_idx_images(image_bytes);
    d.labels = parse_idx_labels(label_bytes);
    if (d.images.size() != d.labels.size())
        throw Error(ErrorCode::CountMismatch, "IDX image/label count mismatch: " + std::to_string(d.images.size()) +
                                                  " vs " + std::to_string(d.labels.size()));
    return d;
}

std::string encode_idx_images(const std::vector<Tensor>& images) {
    std::size_t rows = 0, cols = 0;
    if (!images.empty()) {
        rows = images[0].height();
        cols = images[0].width();
    }
    std::string out;
    append_be32(out, kIdxImageMagic);
    append_be32(out, static_cast<std::uint32_t>(images.size()));
    append_be32(out, static_cast<std::uint32_t>(rows));
    append_be32(out, static_cast<std::uint32_t>(cols));
    for (const auto& img : images) {
        if (img.shape != Shape{rows, cols, 1})
            throw Error(ErrorCode::ShapeMismatch, "IDX images must share one single-channel shape");
        for (float v : img.data) out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(std::round(v), 0.0f, 255.0f))));
    }
    return out;
}

std::string encode_idx_labels(const std::vector<int>& labels) {
    std::string out;
    append_be32(out, kIdxLabelMagic);
    append_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) out.push_back(static_cast<char>(static_cast<unsigned char>(l)));
    return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    Dataset d;
    d.images = parse_idx_images(read_file(images));
    std::filesystem::path label_path = labels;
    if (label_path.empty()) {
        std::string name = images.filename().string();
        if (auto pos = name.find("images-idx3"); pos != std::string::npos) {
            name.replace(pos, 11, "labels-idx1");
            label_path = images.parent_path() / name;
        }
    }
    if (!label_path.empty() && std::filesystem::exists(label_path)) {
        d.labels = parse_idx_labels(read_file(label_path));
        if (d.labels.size() != d.images.size())
            throw Error(ErrorCode::CountMismatch, "IDX image/label count mismatch");
    } else if (!labels.empty()) {
        throw Error(ErrorCode::Io, "cannot open " + labels.string());
    } else {
        d.labels.assign(d.images.size(), 0);
    }
    return d;
}

Dataset synthetic_dataset(std::size_t count, const Shape& shape, std::uint64_t seed) {
    if (shape.size() != 3 || shape[0] < 4 || shape[1] < 4 || shape[2] < 1)
        throw Error(ErrorCode::Config, "synthetic images need an H x W x C shape of at least 4 x 4");
    const std::size_t h = shape[0], w = shape[1], ch = shape[2];
    Rng rng(seed);
    Dataset d;
    d.images.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        d.labels.push_back(static_cast<int>(rng.below(10)));
        std::vector<float> ink(h * w, 0.0f);
        const std::size_t strokes = 2 + rng.below(3);
        const double radius = 0.8 + 0.9 * rng.uniform();
        const double intensity = 170.0 + 85.0 * rng.uniform();
        // Quadratic Bezier strokes inside the central 70% of the canvas.
        auto coord = [&](std::size_t extent) { return (0.15 + 0.7 * rng.uniform()) * double(extent - 1); };
        for (std::size_t s = 0; s < strokes; ++s) {
            const double y0 = coord(h), x0 = coord(w), y1 = coord(h), x1 = coord(w), y2 = coord(h), x2 = coord(w);
            for (int step = 0; step <= 48; ++step) {
                const double t = step / 48.0;
                const double cy = (1 - t) * (1 - t) * y0 + 2 * (1 - t) * t * y1 + t * t * y2;
                const double cx = (1 - t) * (1 - t) * x0 + 2 * (1 - t) * t * x1 + t * t * x2;
                const auto ylo = static_cast<std::ptrdiff_t>(std::floor(cy - radius - 1));
                const auto xlo = static_cast<std::ptrdiff_t>(std::floor(cx - radius - 1));
                for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, ylo); y <= ylo + 2 * radius + 2 && y < std::ptrdiff_t(h); ++y)
                    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, xlo); x <= xlo + 2 * radius + 2 && x < std::ptrdiff_t(w); ++x) {
                        const double dy = double(y) - cy, dx = double(x) - cx;
                        const double dist = std::sqrt(dy * dy + dx * dx);
                        const double cover = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
                        float& px = ink[std::size_t(y) * w + std::size_t(x)];
                        px = std::max(px, static_cast<float>(cover * intensity));
                    }
            }
        }
        Tensor img(shape);
        std::vector<double> tint(ch, 1.0);
        if (ch > 1)
            for (auto& t : tint) t = 0.55 + 0.45 * rng.uniform();
        for (std::size_t i = 0; i < h * w; ++i)
            for (std::size_t c = 0; c < ch; ++c) {
                const double base = ch > 1 ? 25.0 * rng.uniform() : 0.0;
                img.data[i * ch + c] = static_cast<float>(std::round(std::clamp(base + ink[i] * tint[c], 0.0, 255.0)));
            }
        d.images.push_back(std::move(img));
    }
    return d;
}

}  // namespace covfuzz
