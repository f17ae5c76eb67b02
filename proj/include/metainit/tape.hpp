#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metainit/array.hpp"

namespace metainit {

class Tape;
namespace detail {
struct OpWriter;
}

// Handle to a node on a Tape. Cheap to copy. A handle is valid until the
// tape is truncated past the node it points to.
class Tensor {
public:
    Tensor() = default;

    const Shape& shape() const;
    std::span<const double> values() const;
    // Scalar convenience; throws ContractError unless numel() == 1.
    double value() const;
    Array to_array() const;

    std::size_t node_id() const { return node_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    friend struct detail::OpWriter;
    Tensor(Tape* tape, std::size_t node) : tape_(tape), node_(node) {}

    Tape* tape_ = nullptr;
    std::size_t node_ = 0;
};

enum class OpKind : std::uint8_t {
    kLeaf,
    kMatMul,
    kTranspose,
    kAdd,
    kSub,
    kMul,
    kScale,
    kRelu,
    kExp,
    kSum,
    kBcastScalar,
    kRowSum,
    kRepeatCols,
    kColSum,
    kRepeatRows,
    kSliceRows,
    kConcatRows,
    kReshape,
    kLogSoftmaxRows,
    kSoftmaxCrossEntropy,
};

const char* op_name(OpKind op);

namespace detail {

// Internal node record; reach it through Tensor/Tape, not directly.
struct TapeNode {
    OpKind op = OpKind::kLeaf;
    Shape shape;
    std::vector<double> values;
    std::vector<std::size_t> inputs;
    double factor = 0.0;             // kScale
    std::size_t aux0 = 0, aux1 = 0;  // slice bounds / repeat counts
};

} // namespace detail

// Append-only record of primitive operations with cached forward values.
// Gradients returned by backward(create_graph=true) are tape nodes
// themselves, so a second backward pass differentiates through them.
//
// A tape and the tensors recorded on it form one single-threaded unit;
// distinct tapes are independent.
class Tape {
public:
    explicit Tape(bool checked = true) : checked_(checked) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor leaf(Array value);
    Tensor leaf(const Shape& shape, std::span<const double> values);
    Tensor constant(double v) { return leaf(Array::scalar(v)); }
    Tensor zeros(const Shape& shape) { return leaf(Array::zeros(shape)); }

    std::size_t size() const { return nodes_.size(); }

    // Checkpointing: mark() captures the current node count; truncate()
    // removes exactly the nodes recorded after the checkpoint. Handles into
    // the removed region become invalid.
    std::size_t mark() const { return nodes_.size(); }
    void truncate(std::size_t checkpoint);

    // When checked, every recorded node's values are scanned for NaN/Inf.
    bool checked() const { return checked_; }
    void set_checked(bool on) { checked_ = on; }

    // Reverse pass from a scalar loss. Returns dloss/dwrt[i], shape-matched.
    // With create_graph the gradients are recorded nodes (differentiable);
    // without it they are detached constants and all intermediate adjoint
    // nodes are discarded from the tape.
    std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> wrt,
                                 bool create_graph);

private:
    friend class Tensor;
    friend struct detail::OpWriter;

    using Node = detail::TapeNode;

    Tensor record(Node node);
    const Node& node(std::size_t id) const { return nodes_[id]; }

    void accumulate(std::vector<Tensor>& adjoint, std::size_t input, const Tensor& contribution);
    void push_adjoints(std::size_t id, const Tensor& up, std::vector<Tensor>& adjoint);

    std::vector<Node> nodes_;
    bool checked_;
};

// Recorded primitives. Shapes follow the row-major rank<=2 model of Array.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor bcast_scalar(const Tensor& a, const Shape& shape);
Tensor row_sum(const Tensor& a);                       // m x n -> m x 1
Tensor repeat_cols(const Tensor& a, std::size_t n);    // m x 1 -> m x n
Tensor col_sum(const Tensor& a);                       // m x n -> vector n
Tensor repeat_rows(const Tensor& a, std::size_t m);    // vector n -> m x n
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor concat_rows(std::span<const Tensor> parts);     // vectors count as one row
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor log_softmax_rows(const Tensor& a);

// Mean over rows of -log softmax(logits)[label]; stabilized by row-max
// subtraction. The onehot rows must contain exactly one 1 and otherwise 0.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& onehot);

// Conveniences composed from the primitives above.
Tensor mean(const Tensor& a);
Tensor add_rowvec(const Tensor& a, const Tensor& b);   // b added to every row

} // namespace metainit
