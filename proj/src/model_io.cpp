#include "covfuzz/model_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "covfuzz/error.hpp"

namespace covfuzz {

namespace {

constexpr std::string_view kMagic = "covfuzz-model";
constexpr int kVersion = 1;

[[noreturn]] void malformed(const std::string& what) {
    throw Error(ErrorCode::MalformedHeader, "malformed model header: " + what);
}

std::size_t parse_size(std::istringstream& in, const std::string& key) {
    long long v = -1;
    if (!(in >> v) || v < 0) malformed("expected non-negative integer after '" + key + "'");
    return static_cast<std::size_t>(v);
}

Activation parse_activation(std::istringstream& in) {
    std::string s;
    in >> s;
    if (s == "relu") return Activation::Relu;
    if (s == "none") return Activation::None;
    malformed("unknown activation '" + s + "'");
}

LayerKind parse_kind(const std::string& s) {
    if (s == "dense") return LayerKind::Dense;
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "maxpool2d") return LayerKind::MaxPool2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "softmax") return LayerKind::Softmax;
    malformed("unknown layer kind '" + s + "'");
}

struct ParsedLayer {
    LayerSpec spec;
    std::size_t weight_count = 0;
    std::size_t bias_count = 0;
};

ParsedLayer parse_layer(std::istringstream& in) {
    std::string kind;
    if (!(in >> kind)) malformed("layer line without kind");
    ParsedLayer p;
    p.spec.kind = parse_kind(kind);
    bool saw_traced = false;
    std::string key;
    while (in >> key) {
        if (key == "in") {
            std::size_t v = parse_size(in, key);
            if (p.spec.kind == LayerKind::Conv2d) p.spec.in_channels = v;
            else p.spec.in_dim = v;
        } else if (key == "out") {
            std::size_t v = parse_size(in, key);
            if (p.spec.kind == LayerKind::Conv2d) p.spec.out_channels = v;
            else p.spec.out_dim = v;
        } else if (key == "kernel") {
            p.spec.kernel_h = parse_size(in, key);
            p.spec.kernel_w = parse_size(in, key);
        } else if (key == "stride") {
            p.spec.stride = parse_size(in, key);
        } else if (key == "window") {
            p.spec.window = parse_size(in, key);
        } else if (key == "activation") {
            p.spec.activation = parse_activation(in);
        } else if (key == "traced") {
            p.spec.traced = parse_size(in, key) != 0;
            saw_traced = true;
        } else if (key == "weights") {
            p.weight_count = parse_size(in, key);
        } else if (key == "bias") {
            p.bias_count = parse_size(in, key);
        } else {
            malformed("unknown layer key '" + key + "'");
        }
    }
    if (!saw_traced) malformed("layer without traced flag");
    return p;
}

}  // namespace

std::string format_float(float value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

float parse_float(std::string_view text) {
    float v = 0.0f;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw Error(ErrorCode::MalformedHeader, "not a float: '" + std::string(text) + "'");
    return v;
}

void append_f32_le(std::string& out, float value) {
    auto bits = std::bit_cast<std::uint32_t>(value);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
                         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
    return std::bit_cast<float>(bits);
}

std::string serialize_model(const Model& model) {
    std::ostringstream h;
    h << kMagic << ' ' << kVersion << '\n';
    h << "name " << model.name() << '\n';
    h << "input_shape";
    for (auto d : model.input_shape()) h << ' ' << d;
    h << '\n';
    h << "input_scale " << format_float(model.input_scale()) << '\n';
    for (const auto& l : model.layers()) {
        h << "layer " << to_string(l.kind);
        switch (l.kind) {
        case LayerKind::Dense:
            h << " in " << l.in_dim << " out " << l.out_dim << " activation "
              << to_string(l.activation);
            break;
        case LayerKind::Conv2d:
            h << " kernel " << l.kernel_h << ' ' << l.kernel_w << " in " << l.in_channels
              << " out " << l.out_channels << " stride " << l.stride << " activation "
              << to_string(l.activation);
            break;
        case LayerKind::MaxPool2d:
            h << " window " << l.window << " stride " << l.stride;
            break;
        default:
            break;
        }
        h << " traced " << (l.traced ? 1 : 0);
        if (l.has_parameters()) h << " weights " << l.weights.size() << " bias " << l.bias.size();
        h << '\n';
    }
    h << "end\n";

    std::string out = h.str();
    for (const auto& l : model.layers()) {
        for (float w : l.weights) append_f32_le(out, w);
        for (float b : l.bias) append_f32_le(out, b);
    }
    return out;
}

Model deserialize_model(std::string_view bytes) {
    constexpr std::string_view kEnd = "\nend\n";
    const auto end_pos = bytes.find(kEnd);
    if (end_pos == std::string_view::npos) malformed("missing 'end' line");
    std::istringstream header{std::string(bytes.substr(0, end_pos + 1))};
    std::size_t offset = end_pos + kEnd.size();

    std::string line;
    if (!std::getline(header, line)) malformed("empty file");
    {
        std::istringstream first(line);
        std::string magic;
        int version = 0;
        if (!(first >> magic >> version) || magic != kMagic) malformed("bad magic");
        if (version != kVersion) malformed("unsupported version " + std::to_string(version));
    }

    std::string name;
    Shape input_shape;
    float input_scale = 1.0f;
    std::vector<ParsedLayer> layers;
    while (std::getline(header, line)) {
        if (line.empty()) continue;
        std::istringstream in(line);
        std::string key;
        in >> key;
        if (key == "name") {
            std::getline(in >> std::ws, name);
        } else if (key == "input_shape") {
            long long d = 0;
            while (in >> d) {
                if (d <= 0) malformed("input_shape dimensions must be positive");
                input_shape.push_back(static_cast<std::size_t>(d));
            }
        } else if (key == "input_scale") {
            std::string v;
            in >> v;
            input_scale = parse_float(v);
        } else if (key == "layer") {
            layers.push_back(parse_layer(in));
        } else {
            malformed("unknown key '" + key + "'");
        }
    }
    if (input_shape.empty()) malformed("missing input_shape");
    if (layers.empty()) throw Error(ErrorCode::NoLayers, "model has no layers");

    std::vector<LayerSpec> specs;
    specs.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        ParsedLayer& p = layers[i];
        if (p.weight_count != p.spec.expected_weight_count() ||
            p.bias_count != p.spec.expected_bias_count())
            throw Error(ErrorCode::WeightLengthMismatch,
                        "weight length mismatch at layer " + std::to_string(i));
        const std::size_t need = 4 * (p.weight_count + p.bias_count);
        if (bytes.size() - offset < need)
            throw Error(ErrorCode::TruncatedWeights,
                        "truncated weights at layer " + std::to_string(i));
        const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
        p.spec.weights.resize(p.weight_count);
        p.spec.bias.resize(p.bias_count);
        for (std::size_t k = 0; k < p.weight_count; ++k) p.spec.weights[k] = read_f32_le(raw + 4 * k);
        raw += 4 * p.weight_count;
        for (std::size_t k = 0; k < p.bias_count; ++k) p.spec.bias[k] = read_f32_le(raw + 4 * k);
        offset += need;
        specs.push_back(std::move(p.spec));
    }
    if (offset != bytes.size())
        throw Error(ErrorCode::WeightLengthMismatch,
                    "weight length mismatch: " + std::to_string(bytes.size() - offset) +
                        " trailing bytes after the last layer");
    return Model(std::move(name), std::move(input_shape), std::move(specs), input_scale);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void save_model(const Model& model, const std::filesystem::path& path) {
    write_file(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace covfuzz
