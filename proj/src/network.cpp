#include "metainit/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "metainit/rng.hpp"

namespace metainit {

void BackboneSpec::validate() const {
    if (input_dim < 1) throw ValidationError("backbone: input_dim must be >= 1");
    if (hidden_widths.empty()) throw ValidationError("backbone: no hidden widths");
    for (std::size_t w : hidden_widths)
        if (w < 1) throw ValidationError("backbone: zero hidden width");
}

namespace {

Array glorot_matrix(std::size_t fan_in, std::size_t fan_out, std::size_t rows, std::size_t cols,
                    Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Array w = Array::zeros(Shape::matrix(rows, cols));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    return w;
}

} // namespace

Backbone init_backbone(const BackboneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Backbone m;
    m.spec = spec;
    std::size_t in = spec.input_dim;
    for (std::size_t out : spec.hidden_widths) {
        m.weights.push_back(glorot_matrix(in, out, in, out, rng));
        m.biases.push_back(Array::zeros(Shape::vector(out)));
        in = out;
    }
    return m;
}

MasterNeuron init_master(std::size_t width, std::uint64_t seed) {
    if (width < 1) throw ValidationError("master neuron: width must be >= 1");
    Rng rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(width + 1));
    MasterNeuron phi{Array::zeros(Shape::vector(width)), Array::scalar(0.0)};
    for (double& v : phi.weights.data) v = rng.uniform(-bound, bound);
    return phi;
}

HeadParams init_head(std::size_t classes, std::size_t width, std::uint64_t seed) {
    if (classes < 1) throw ValidationError("head: class count must be >= 1");
    Rng rng(seed);
    HeadParams head{glorot_matrix(width, classes, classes, width, rng),
                    Array::zeros(Shape::vector(classes))};
    return head;
}

TapedBackbone lift(const Backbone& m, Tape& tape) {
    TapedBackbone t{m.spec, {}};
    t.params.reserve(2 * m.weights.size());
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        t.params.push_back(tape.leaf(m.weights[i]));
        t.params.push_back(tape.leaf(m.biases[i]));
    }
    return t;
}

TapedMaster lift(const MasterNeuron& phi, Tape& tape) {
    return {tape.leaf(phi.weights), tape.leaf(phi.bias)};
}

TapedHead lift(const HeadParams& head, Tape& tape) {
    return {tape.leaf(head.weights), tape.leaf(head.biases)};
}

HeadParams snapshot(const TapedHead& head) {
    return {head.weights.to_array(), head.biases.to_array()};
}

Tensor forward_backbone(const TapedBackbone& m, const Tensor& x) {
    if (x.shape().rank() != 2 || x.shape().dims[1] != m.spec.input_dim)
        throw DimensionError("forward_backbone: input " + x.shape().str() + " vs feature dim " +
                             std::to_string(m.spec.input_dim));
    Tensor h = x;
    for (std::size_t i = 0; i < m.spec.layer_count(); ++i)
        h = relu(add_rowvec(matmul(h, m.params[2 * i]), m.params[2 * i + 1]));
    return h;
}

TapedHead instantiate_head(const TapedMaster& phi, std::size_t classes) {
    if (classes < 1) throw ValidationError("instantiate_head: class count must be >= 1");
    std::vector<Tensor> rows(classes, phi.weights);
    Tensor weights = concat_rows(rows);
    std::vector<Tensor> biases(classes, reshape(phi.bias, Shape::vector(1)));
    Tensor bias = classes == 1 ? biases[0]
                               : reshape(concat_rows(biases), Shape::vector(classes));
    return {weights, bias};
}

Tensor forward_full(const TapedBackbone& m, const TapedHead& head, const Tensor& x) {
    Tensor features = forward_backbone(m, x);
    if (head.weights.shape().dims[1] != m.spec.feature_width())
        throw DimensionError("forward_full: head width " +
                             std::to_string(head.weights.shape().dims[1]) +
                             " vs backbone feature width " +
                             std::to_string(m.spec.feature_width()));
    return add_rowvec(matmul(features, transpose(head.weights)), head.biases);
}

MasterNeuron aggregate_head(const HeadParams& head) {
    const std::size_t c = head.class_count(), w = head.width();
    MasterNeuron phi{Array::zeros(Shape::vector(w)), Array::scalar(0.0)};
    std::vector<double> column(c);
    for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t i = 0; i < c; ++i) column[i] = head.weights.at(i, j);
        phi.weights.data[j] = running_mean(column);
    }
    phi.bias.data[0] = running_mean(head.biases.data);
    return phi;
}

HeadParams replicate_master(const MasterNeuron& phi, std::size_t classes) {
    if (classes < 1) throw ValidationError("replicate_master: class count must be >= 1");
    const std::size_t w = phi.width();
    HeadParams head{Array::zeros(Shape::matrix(classes, w)), Array::zeros(Shape::vector(classes))};
    for (std::size_t i = 0; i < classes; ++i) {
        std::copy(phi.weights.data.begin(), phi.weights.data.end(),
                  head.weights.data.begin() + i * w);
        head.biases.data[i] = phi.bias.data[0];
    }
    return head;
}

HeadParams copy_neuron_head(const HeadParams& head, std::size_t neuron) {
    if (neuron >= head.class_count())
        throw ValidationError("copy_neuron_head: neuron " + std::to_string(neuron) +
                              " out of range for " + std::to_string(head.class_count()) +
                              " classes");
    const std::size_t c = head.class_count(), w = head.width();
    HeadParams out{Array::zeros(Shape::matrix(c, w)), Array::zeros(Shape::vector(c))};
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < w; ++j) out.weights.at(i, j) = head.weights.at(neuron, j);
        out.biases.data[i] = head.biases.data[neuron];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: magic "HIDR", version u32, spec (F, layer count, widths),
// named tensors, then the master-neuron block. All little-endian.

namespace {

constexpr char kMagic[4] = {'H', 'I', 'D', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("parameter file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw FormatError("parameter file truncated");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

void put_tensor(std::ostream& os, const std::string& name, const Array& a) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(a.shape.rank()));
    for (std::size_t d : a.shape.dims) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : a.data) put_f64(os, v);
}

struct NamedTensor {
    std::string name;
    Array value;
};

NamedTensor get_tensor(std::istream& is) {
    const std::uint32_t len = get_u32(is);
    if (len > 4096) throw FormatError("parameter file: unreasonable tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("parameter file truncated");
    const std::uint32_t rank = get_u32(is);
    if (rank > 2) throw FormatError("parameter file: tensor rank " + std::to_string(rank));
    std::vector<std::size_t> dims;
    for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(get_u32(is));
    Shape shape(dims);
    std::vector<double> data(shape.numel());
    for (double& v : data) v = get_f64(is);
    return {std::move(name), Array(std::move(shape), std::move(data))};
}

void write_manifest(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json j;
    j["magic"] = "HIDR";
    j["version"] = kVersion;
    j["method"] = ckpt.method;
    j["input_dim"] = ckpt.backbone.spec.input_dim;
    j["hidden_widths"] = ckpt.backbone.spec.hidden_widths;
    j["master_width"] = ckpt.master.width();
    nlohmann::json tensors = nlohmann::json::array();
    auto add = [&](const std::string& name, const Array& a) {
        tensors.push_back({{"name", name}, {"dims", a.shape.dims}});
    };
    for (std::size_t i = 0; i < ckpt.backbone.weights.size(); ++i) {
        add("layer" + std::to_string(i) + ".weight", ckpt.backbone.weights[i]);
        add("layer" + std::to_string(i) + ".bias", ckpt.backbone.biases[i]);
    }
    if (ckpt.head) {
        add("head.weight", ckpt.head->weights);
        add("head.bias", ckpt.head->biases);
    }
    j["tensors"] = std::move(tensors);
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest " + path.string());
    os << j.dump(2) << '\n';
}

} // namespace

void save_params(const Checkpoint& ckpt, const std::filesystem::path& path) {
    ckpt.backbone.spec.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(ckpt.backbone.spec.input_dim));
    put_u32(os, static_cast<std::uint32_t>(ckpt.backbone.spec.layer_count()));
    for (std::size_t w : ckpt.backbone.spec.hidden_widths)
        put_u32(os, static_cast<std::uint32_t>(w));

    const std::uint32_t tensor_count =
        static_cast<std::uint32_t>(2 * ckpt.backbone.weights.size() + (ckpt.head ? 2 : 0));
    put_u32(os, tensor_count);
    for (std::size_t i = 0; i < ckpt.backbone.weights.size(); ++i) {
        put_tensor(os, "layer" + std::to_string(i) + ".weight", ckpt.backbone.weights[i]);
        put_tensor(os, "layer" + std::to_string(i) + ".bias", ckpt.backbone.biases[i]);
    }
    if (ckpt.head) {
        put_tensor(os, "head.weight", ckpt.head->weights);
        put_tensor(os, "head.bias", ckpt.head->biases);
    }

    put_u32(os, static_cast<std::uint32_t>(ckpt.master.width()));
    for (double v : ckpt.master.weights.data) put_f64(os, v);
    put_f64(os, ckpt.master.bias.data[0]);
    if (!os) throw IoError("write failed for " + path.string());
    os.close();

    write_manifest(ckpt, path.string() + ".json");
}

Checkpoint load_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path.string() + ": bad magic, not a parameter file");
    const std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.backbone.spec.input_dim = get_u32(is);
    const std::uint32_t layers = get_u32(is);
    if (layers == 0 || layers > 1024) throw FormatError(path.string() + ": bad layer count");
    for (std::uint32_t i = 0; i < layers; ++i)
        ckpt.backbone.spec.hidden_widths.push_back(get_u32(is));
    ckpt.backbone.spec.validate();

    const std::uint32_t tensor_count = get_u32(is);
    std::optional<Array> head_w, head_b;
    ckpt.backbone.weights.resize(layers);
    ckpt.backbone.biases.resize(layers);
    std::vector<char> seen(layers * 2, 0);
    for (std::uint32_t t = 0; t < tensor_count; ++t) {
        NamedTensor nt = get_tensor(is);
        if (nt.name == "head.weight") {
            head_w = std::move(nt.value);
        } else if (nt.name == "head.bias") {
            head_b = std::move(nt.value);
        } else if (nt.name.starts_with("layer")) {
            const auto dot = nt.name.find('.');
            const std::size_t idx = std::stoul(nt.name.substr(5, dot - 5));
            if (idx >= layers) throw FormatError(path.string() + ": tensor " + nt.name +
                                                 " exceeds declared layer count");
            const std::size_t fan_in = idx == 0 ? ckpt.backbone.spec.input_dim
                                                : ckpt.backbone.spec.hidden_widths[idx - 1];
            const std::size_t fan_out = ckpt.backbone.spec.hidden_widths[idx];
            if (nt.name.ends_with(".weight")) {
                if (nt.value.shape != Shape::matrix(fan_in, fan_out))
                    throw ValidationError(nt.name + ": expected " +
                                          Shape::matrix(fan_in, fan_out).str() + ", found " +
                                          nt.value.shape.str());
                ckpt.backbone.weights[idx] = std::move(nt.value);
                seen[2 * idx] = 1;
            } else {
                if (nt.value.shape != Shape::vector(fan_out))
                    throw ValidationError(nt.name + ": expected " + Shape::vector(fan_out).str() +
                                          ", found " + nt.value.shape.str());
                ckpt.backbone.biases[idx] = std::move(nt.value);
                seen[2 * idx + 1] = 1;
            }
        } else {
            throw FormatError(path.string() + ": unknown tensor " + nt.name);
        }
    }
    for (std::size_t i = 0; i < layers; ++i)
        if (!seen[2 * i] || !seen[2 * i + 1])
            throw FormatError(path.string() + ": layer" + std::to_string(i) +
                              " missing from parameter file");

    const std::uint32_t master_width = get_u32(is);
    if (master_width != ckpt.backbone.spec.feature_width())
        throw ValidationError(path.string() + ": master width " + std::to_string(master_width) +
                              " vs backbone feature width " +
                              std::to_string(ckpt.backbone.spec.feature_width()));
    ckpt.master.weights = Array::zeros(Shape::vector(master_width));
    for (double& v : ckpt.master.weights.data) v = get_f64(is);
    ckpt.master.bias = Array::scalar(get_f64(is));

    if (head_w.has_value() != head_b.has_value())
        throw FormatError(path.string() + ": incomplete head block");
    if (head_w) {
        if (head_w->shape.rank() != 2 ||
            head_w->shape.dims[1] != ckpt.backbone.spec.feature_width())
            throw ValidationError("head.weight: expected Cx" +
                                  std::to_string(ckpt.backbone.spec.feature_width()) + ", found " +
                                  head_w->shape.str());
        if (head_b->shape != Shape::vector(head_w->shape.dims[0]))
            throw ValidationError("head.bias: expected " +
                                  Shape::vector(head_w->shape.dims[0]).str() + ", found " +
                                  head_b->shape.str());
        ckpt.head = HeadParams{std::move(*head_w), std::move(*head_b)};
    }

    // method is manifest metadata; absence is fine
    const std::filesystem::path manifest = path.string() + ".json";
    if (std::filesystem::exists(manifest)) {
        std::ifstream ms(manifest);
        try {
            nlohmann::json j;
            ms >> j;
            if (j.contains("method")) ckpt.method = j["method"].get<std::string>();
        } catch (const nlohmann::json::exception&) {
            // manifest is informational only
        }
    }
    if (ckpt.method.empty()) ckpt.method = ckpt.head ? "static" : "hidra";
    return ckpt;
}

} // namespace metainit
