#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "metainit/array.hpp"
#include "metainit/tape.hpp"

namespace metainit {

enum class Activation { kRelu };

// Dense feature extractor description. The final hidden width is the feature
// width w that any classification head consumes.
struct BackboneSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_widths;
    Activation activation = Activation::kRelu;

    std::size_t feature_width() const { return hidden_widths.back(); }
    std::size_t layer_count() const { return hidden_widths.size(); }
    void validate() const;
    bool operator==(const BackboneSpec&) const = default;
};

// Backbone parameters as plain values; an immutable snapshot between
// meta-steps. Parameter names are layer<i>.weight / layer<i>.bias.
struct Backbone {
    BackboneSpec spec;
    std::vector<Array> weights; // layer i: widths[i-1] x widths[i], widths[0] = F
    std::vector<Array> biases;  // layer i: widths[i]
};

// The single output-neuron parameter set every dynamic head is built from.
struct MasterNeuron {
    Array weights; // vector of length w
    Array bias;    // scalar

    std::size_t width() const { return weights.shape.dims[0]; }
};

// A C-neuron output layer as plain values.
struct HeadParams {
    Array weights; // C x w
    Array biases;  // vector of length C

    std::size_t class_count() const { return weights.shape.dims[0]; }
    std::size_t width() const { return weights.shape.dims[1]; }
};

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
Backbone init_backbone(const BackboneSpec& spec, std::uint64_t seed);
// Glorot-uniform draw with fan_in = w, fan_out = 1; zero bias.
MasterNeuron init_master(std::size_t width, std::uint64_t seed);
// Glorot-uniform C x w head, zero biases (the static-head baseline init).
HeadParams init_head(std::size_t classes, std::size_t width, std::uint64_t seed);

// --- taped views -----------------------------------------------------------

struct TapedBackbone {
    BackboneSpec spec;
    std::vector<Tensor> params; // weight, bias, weight, bias, ...
};

struct TapedMaster {
    Tensor weights; // vector w
    Tensor bias;    // scalar
};

struct TapedHead {
    Tensor weights; // C x w
    Tensor biases;  // vector C

    std::size_t class_count() const { return weights.shape().dims[0]; }
};

TapedBackbone lift(const Backbone& m, Tape& tape);
TapedMaster lift(const MasterNeuron& phi, Tape& tape);
TapedHead lift(const HeadParams& head, Tape& tape);

HeadParams snapshot(const TapedHead& head);

// Features of a batch: alternating affine and activation, final layer
// activated as well. x is B x F, result B x w.
Tensor forward_backbone(const TapedBackbone& m, const Tensor& x);

// The dynamic head: C differentiable copies of the master neuron, each row
// independently trainable afterwards. Gradients w.r.t. the master neuron
// sum over the rows.
TapedHead instantiate_head(const TapedMaster& phi, std::size_t classes);

// Logits = backbone(x) . W^T + biases; no output activation.
Tensor forward_full(const TapedBackbone& m, const TapedHead& head, const Tensor& x);

// Row-wise arithmetic mean of the head, back into master space. Exact on
// identical rows.
MasterNeuron aggregate_head(const HeadParams& head);

// Value-space replication of the master neuron into a C-row head.
HeadParams replicate_master(const MasterNeuron& phi, std::size_t classes);

// A head whose every neuron is row `neuron` of the input head.
HeadParams copy_neuron_head(const HeadParams& head, std::size_t neuron);

// --- persistence -----------------------------------------------------------

// On-disk parameter bundle. The optional static head is stored alongside the
// backbone tensors; the master-neuron block is always present (for a
// static-head model it holds the row average of the head).
struct Checkpoint {
    Backbone backbone;
    MasterNeuron master;
    std::optional<HeadParams> head;
    std::string method; // manifest metadata: "maml", "fomaml", "reptile", "hidra"
};

// Binary little-endian parameter file plus a JSON manifest at path + ".json".
void save_params(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_params(const std::filesystem::path& path);

} // namespace metainit
