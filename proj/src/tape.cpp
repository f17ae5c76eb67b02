#include "metainit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metainit {

namespace detail {

// Single gateway through which the free op functions reach Tape internals.
struct OpWriter {
    static Tensor record(Tape& tape, Tape::Node node) { return tape.record(std::move(node)); }
    static const Tape::Node& node(const Tape& tape, std::size_t id) { return tape.node(id); }
    static Tensor handle(Tape& tape, std::size_t id) { return Tensor(&tape, id); }
};

} // namespace detail

using detail::OpWriter;

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::kLeaf: return "leaf";
        case OpKind::kMatMul: return "matmul";
        case OpKind::kTranspose: return "transpose";
        case OpKind::kAdd: return "add";
        case OpKind::kSub: return "sub";
        case OpKind::kMul: return "mul";
        case OpKind::kScale: return "scale";
        case OpKind::kRelu: return "relu";
        case OpKind::kExp: return "exp";
        case OpKind::kSum: return "sum";
        case OpKind::kBcastScalar: return "bcast_scalar";
        case OpKind::kRowSum: return "row_sum";
        case OpKind::kRepeatCols: return "repeat_cols";
        case OpKind::kColSum: return "col_sum";
        case OpKind::kRepeatRows: return "repeat_rows";
        case OpKind::kSliceRows: return "slice_rows";
        case OpKind::kConcatRows: return "concat_rows";
        case OpKind::kReshape: return "reshape";
        case OpKind::kLogSoftmaxRows: return "log_softmax_rows";
        case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Tensor accessors

namespace {

const detail::TapeNode& deref(const Tensor& t) {
    if (!t.valid()) throw LineageError("use of a default-constructed tensor");
    return detail::OpWriter::node(*t.tape(), t.node_id());
}

Tape& tape_of(const Tensor& t) {
    if (!t.valid()) throw LineageError("use of a default-constructed tensor");
    return *t.tape();
}

void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.tape() != b.tape())
        throw LineageError(std::string(op) + ": operands live on different tapes");
}

} // namespace

const Shape& Tensor::shape() const { return deref(*this).shape; }

std::span<const double> Tensor::values() const {
    const auto& n = deref(*this);
    return {n.values.data(), n.values.size()};
}

double Tensor::value() const {
    const auto& n = deref(*this);
    if (n.values.size() != 1)
        throw ContractError("value(): tensor of shape " + n.shape.str() + " is not a scalar");
    return n.values[0];
}

Array Tensor::to_array() const {
    const auto& n = deref(*this);
    return Array(n.shape, n.values);
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::record(Node node) {
    if (checked_) {
        for (double v : node.values) {
            if (!std::isfinite(v))
                throw NumericError(std::string(op_name(node.op)) +
                                   " produced a non-finite value (checked mode)");
        }
    }
    nodes_.push_back(std::move(node));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::leaf(Array value) {
    Node n;
    n.op = OpKind::kLeaf;
    n.shape = std::move(value.shape);
    n.values = std::move(value.data);
    return record(std::move(n));
}

Tensor Tape::leaf(const Shape& shape, std::span<const double> values) {
    return leaf(Array(shape, std::vector<double>(values.begin(), values.end())));
}

void Tape::truncate(std::size_t checkpoint) {
    if (checkpoint > nodes_.size())
        throw ContractError("truncate: checkpoint " + std::to_string(checkpoint) +
                            " is past the end of the tape (" + std::to_string(nodes_.size()) + ")");
    nodes_.resize(checkpoint);
}

// ---------------------------------------------------------------------------
// Primitive forward implementations

namespace {

detail::TapeNode make_node(OpKind op, Shape shape, std::vector<std::size_t> inputs) {
    detail::TapeNode n;
    n.op = op;
    n.shape = std::move(shape);
    n.inputs = std::move(inputs);
    n.values.resize(n.shape.numel());
    return n;
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.shape().rank() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " + t.shape().str());
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_same_tape(a, b, "matmul");
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.dims[1] != sb.dims[0])
        throw DimensionError("matmul: inner dimensions disagree, " + sa.str() + " by " + sb.str());
    const std::size_t m = sa.dims[0], k = sa.dims[1], n = sb.dims[1];
    auto node = make_node(OpKind::kMatMul, Shape::matrix(m, n), {a.node_id(), b.node_id()});
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* out = node.values.data();
    std::fill(out, out + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            const double* brow = bv + p * n;
            double* orow = out + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
        }
    }
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.shape().dims[0], n = a.shape().dims[1];
    auto node = make_node(OpKind::kTranspose, Shape::matrix(n, m), {a.node_id()});
    const double* av = a.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) node.values[j * m + i] = av[i * n + j];
    return OpWriter::record(tape_of(a), std::move(node));
}

namespace {

Tensor elementwise(OpKind op, const Tensor& a, const Tensor& b) {
    require_same_tape(a, b, op_name(op));
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op_name(op)) + ": shapes " + a.shape().str() + " and " +
                             b.shape().str() + " differ");
    auto node = make_node(op, a.shape(), {a.node_id(), b.node_id()});
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        switch (op) {
            case OpKind::kAdd: node.values[i] = av[i] + bv[i]; break;
            case OpKind::kSub: node.values[i] = av[i] - bv[i]; break;
            case OpKind::kMul: node.values[i] = av[i] * bv[i]; break;
            default: break;
        }
    }
    return OpWriter::record(tape_of(a), std::move(node));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(OpKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(OpKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(OpKind::kMul, a, b); }

Tensor scale(const Tensor& a, double factor) {
    auto node = make_node(OpKind::kScale, a.shape(), {a.node_id()});
    node.factor = factor;
    const auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) node.values[i] = factor * av[i];
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor relu(const Tensor& a) {
    auto node = make_node(OpKind::kRelu, a.shape(), {a.node_id()});
    const auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) node.values[i] = av[i] > 0.0 ? av[i] : 0.0;
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor exp(const Tensor& a) {
    auto node = make_node(OpKind::kExp, a.shape(), {a.node_id()});
    const auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) node.values[i] = std::exp(av[i]);
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor sum(const Tensor& a) {
    auto node = make_node(OpKind::kSum, Shape::scalar(), {a.node_id()});
    double s = 0.0;
    for (double v : a.values()) s += v;
    node.values[0] = s;
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor bcast_scalar(const Tensor& a, const Shape& shape) {
    if (a.shape().numel() != 1)
        throw DimensionError("bcast_scalar: source of shape " + a.shape().str() +
                             " is not a scalar");
    auto node = make_node(OpKind::kBcastScalar, shape, {a.node_id()});
    std::fill(node.values.begin(), node.values.end(), a.values()[0]);
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor row_sum(const Tensor& a) {
    require_rank2(a, "row_sum");
    const std::size_t m = a.shape().dims[0], n = a.shape().dims[1];
    auto node = make_node(OpKind::kRowSum, Shape::matrix(m, 1), {a.node_id()});
    const double* av = a.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += av[i * n + j];
        node.values[i] = s;
    }
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor repeat_cols(const Tensor& a, std::size_t n) {
    require_rank2(a, "repeat_cols");
    if (a.shape().dims[1] != 1)
        throw DimensionError("repeat_cols: expected a column (m x 1), got " + a.shape().str());
    if (n == 0) throw DimensionError("repeat_cols: zero target width");
    const std::size_t m = a.shape().dims[0];
    auto node = make_node(OpKind::kRepeatCols, Shape::matrix(m, n), {a.node_id()});
    node.aux0 = n;
    const double* av = a.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) node.values[i * n + j] = av[i];
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor col_sum(const Tensor& a) {
    require_rank2(a, "col_sum");
    const std::size_t m = a.shape().dims[0], n = a.shape().dims[1];
    auto node = make_node(OpKind::kColSum, Shape::vector(n), {a.node_id()});
    const double* av = a.values().data();
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += av[i * n + j];
        node.values[j] = s;
    }
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor repeat_rows(const Tensor& a, std::size_t m) {
    if (a.shape().rank() != 1)
        throw DimensionError("repeat_rows: expected a vector, got shape " + a.shape().str());
    if (m == 0) throw DimensionError("repeat_rows: zero target height");
    const std::size_t n = a.shape().dims[0];
    auto node = make_node(OpKind::kRepeatRows, Shape::matrix(m, n), {a.node_id()});
    node.aux0 = m;
    const double* av = a.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) node.values[i * n + j] = av[j];
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    require_rank2(a, "slice_rows");
    const std::size_t m = a.shape().dims[0], n = a.shape().dims[1];
    if (r0 >= r1 || r1 > m)
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + ", " +
                             std::to_string(r1) + ") invalid for " + a.shape().str());
    auto node = make_node(OpKind::kSliceRows, Shape::matrix(r1 - r0, n), {a.node_id()});
    node.aux0 = r0;
    node.aux1 = r1;
    const double* av = a.values().data();
    std::copy(av + r0 * n, av + r1 * n, node.values.begin());
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    Tape& tape = tape_of(parts[0]);
    const std::size_t n = parts[0].shape().cols();
    std::size_t total = 0;
    std::vector<std::size_t> ids;
    ids.reserve(parts.size());
    for (const Tensor& p : parts) {
        require_same_tape(parts[0], p, "concat_rows");
        if (p.shape().rank() == 0)
            throw DimensionError("concat_rows: scalar input; reshape it to a vector first");
        if (p.shape().cols() != n)
            throw DimensionError("concat_rows: row width " + std::to_string(p.shape().cols()) +
                                 " differs from " + std::to_string(n));
        total += p.shape().rows();
        ids.push_back(p.node_id());
    }
    auto node = make_node(OpKind::kConcatRows, Shape::matrix(total, n), std::move(ids));
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        const auto pv = p.values();
        std::copy(pv.begin(), pv.end(), node.values.begin() + off);
        off += pv.size();
    }
    return OpWriter::record(tape, std::move(node));
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape.numel() != a.shape().numel())
        throw DimensionError("reshape: " + a.shape().str() + " has " +
                             std::to_string(a.shape().numel()) + " elements, target " +
                             shape.str() + " has " + std::to_string(shape.numel()));
    auto node = make_node(OpKind::kReshape, shape, {a.node_id()});
    const auto av = a.values();
    std::copy(av.begin(), av.end(), node.values.begin());
    return OpWriter::record(tape_of(a), std::move(node));
}

Tensor log_softmax_rows(const Tensor& a) {
    require_rank2(a, "log_softmax_rows");
    const std::size_t m = a.shape().dims[0], n = a.shape().dims[1];
    auto node = make_node(OpKind::kLogSoftmaxRows, a.shape(), {a.node_id()});
    const double* av = a.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = av + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z);
        for (std::size_t j = 0; j < n; ++j) node.values[i * n + j] = row[j] - mx - logz;
    }
    return OpWriter::record(tape_of(a), std::move(node));
}

namespace {

// Index of the single 1.0 in a one-hot row; ValidationError otherwise.
std::size_t onehot_label(const double* row, std::size_t n, std::size_t row_index) {
    std::size_t label = n;
    for (std::size_t j = 0; j < n; ++j) {
        if (row[j] == 1.0) {
            if (label != n)
                throw ValidationError("softmax_cross_entropy: row " + std::to_string(row_index) +
                                      " has more than one 1");
            label = j;
        } else if (row[j] != 0.0) {
            throw ValidationError("softmax_cross_entropy: row " + std::to_string(row_index) +
                                  " is not one-hot");
        }
    }
    if (label == n)
        throw ValidationError("softmax_cross_entropy: row " + std::to_string(row_index) +
                              " has no 1");
    return label;
}

} // namespace

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& onehot) {
    require_same_tape(logits, onehot, "softmax_cross_entropy");
    require_rank2(logits, "softmax_cross_entropy");
    if (logits.shape() != onehot.shape())
        throw DimensionError("softmax_cross_entropy: logits " + logits.shape().str() +
                             " vs targets " + onehot.shape().str());
    const std::size_t m = logits.shape().dims[0], n = logits.shape().dims[1];
    auto node = make_node(OpKind::kSoftmaxCrossEntropy, Shape::scalar(),
                          {logits.node_id(), onehot.node_id()});
    const double* zv = logits.values().data();
    const double* yv = onehot.values().data();
    // Running mean keeps the uniform-logits case exact (loss == log n when
    // every per-row loss lands on the same double).
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = zv + i * n;
        const std::size_t label = onehot_label(yv + i * n, n, i);
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
        const double li = std::log(z) - (row[label] - mx);
        loss += (li - loss) / static_cast<double>(i + 1);
    }
    node.values[0] = loss;
    return OpWriter::record(tape_of(logits), std::move(node));
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.shape().numel())); }

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
    require_rank2(a, "add_rowvec");
    if (b.shape().rank() != 1 || b.shape().dims[0] != a.shape().dims[1])
        throw DimensionError("add_rowvec: bias of shape " + b.shape().str() +
                             " does not match matrix " + a.shape().str());
    return add(a, repeat_rows(b, a.shape().dims[0]));
}

// ---------------------------------------------------------------------------
// Reverse pass

void Tape::accumulate(std::vector<Tensor>& adjoint, std::size_t input,
                      const Tensor& contribution) {
    if (adjoint[input].valid())
        adjoint[input] = add(adjoint[input], contribution);
    else
        adjoint[input] = contribution;
}

// Emits the recorded adjoint expressions of node `id` given the upstream
// gradient `up`, accumulating into each input slot. Copies the node header
// first: recording adjoint ops reallocates nodes_, so references into it
// must not be held across record calls.
void Tape::push_adjoints(std::size_t id, const Tensor& up, std::vector<Tensor>& adjoint) {
    struct Header {
        OpKind op;
        std::vector<std::size_t> inputs;
        double factor;
        std::size_t aux0, aux1;
        Shape shape;
    };
    const Header n{nodes_[id].op, nodes_[id].inputs, nodes_[id].factor,
                   nodes_[id].aux0, nodes_[id].aux1, nodes_[id].shape};
    const auto input_shape = [this](std::size_t in) { return nodes_[in].shape; };
    const Tensor self = Tensor(this, id);
    switch (n.op) {
        case OpKind::kLeaf:
            break;
        case OpKind::kMatMul: {
            const Tensor a(this, n.inputs[0]), b(this, n.inputs[1]);
            accumulate(adjoint, n.inputs[0], matmul(up, transpose(b)));
            accumulate(adjoint, n.inputs[1], matmul(transpose(a), up));
            break;
        }
        case OpKind::kTranspose:
            accumulate(adjoint, n.inputs[0], transpose(up));
            break;
        case OpKind::kAdd:
            accumulate(adjoint, n.inputs[0], up);
            accumulate(adjoint, n.inputs[1], up);
            break;
        case OpKind::kSub:
            accumulate(adjoint, n.inputs[0], up);
            accumulate(adjoint, n.inputs[1], scale(up, -1.0));
            break;
        case OpKind::kMul: {
            const Tensor a(this, n.inputs[0]), b(this, n.inputs[1]);
            accumulate(adjoint, n.inputs[0], mul(up, b));
            accumulate(adjoint, n.inputs[1], mul(up, a));
            break;
        }
        case OpKind::kScale:
            accumulate(adjoint, n.inputs[0], scale(up, n.factor));
            break;
        case OpKind::kRelu: {
            // Constant 0/1 mask from the forward input; the subgradient at 0
            // is 0, and its derivative is dropped (correct away from the kink).
            Array mask;
            {
                const Node& in = nodes_[n.inputs[0]];
                mask = Array(in.shape, std::vector<double>(in.values.size()));
                for (std::size_t i = 0; i < in.values.size(); ++i)
                    mask.data[i] = in.values[i] > 0.0 ? 1.0 : 0.0;
            }
            accumulate(adjoint, n.inputs[0], mul(up, leaf(std::move(mask))));
            break;
        }
        case OpKind::kExp:
            accumulate(adjoint, n.inputs[0], mul(up, self));
            break;
        case OpKind::kSum:
            accumulate(adjoint, n.inputs[0], bcast_scalar(up, input_shape(n.inputs[0])));
            break;
        case OpKind::kBcastScalar: {
            const Shape target = input_shape(n.inputs[0]);
            accumulate(adjoint, n.inputs[0], reshape(sum(up), target));
            break;
        }
        case OpKind::kRowSum:
            accumulate(adjoint, n.inputs[0], repeat_cols(up, input_shape(n.inputs[0]).dims[1]));
            break;
        case OpKind::kRepeatCols:
            accumulate(adjoint, n.inputs[0], row_sum(up));
            break;
        case OpKind::kColSum:
            accumulate(adjoint, n.inputs[0], repeat_rows(up, input_shape(n.inputs[0]).dims[0]));
            break;
        case OpKind::kRepeatRows:
            accumulate(adjoint, n.inputs[0], col_sum(up));
            break;
        case OpKind::kSliceRows: {
            const Shape in_shape = input_shape(n.inputs[0]);
            const std::size_t m = in_shape.dims[0], w = in_shape.dims[1];
            std::vector<Tensor> parts;
            if (n.aux0 > 0) parts.push_back(zeros(Shape::matrix(n.aux0, w)));
            parts.push_back(up);
            if (n.aux1 < m) parts.push_back(zeros(Shape::matrix(m - n.aux1, w)));
            accumulate(adjoint, n.inputs[0],
                       parts.size() == 1 ? parts[0] : concat_rows(parts));
            break;
        }
        case OpKind::kConcatRows: {
            std::size_t off = 0;
            for (std::size_t input : n.inputs) {
                const Shape s = input_shape(input);
                Tensor piece = slice_rows(up, off, off + s.rows());
                if (s.rank() == 1) piece = reshape(piece, s);
                accumulate(adjoint, input, piece);
                off += s.rows();
            }
            break;
        }
        case OpKind::kReshape: {
            const Shape target = input_shape(n.inputs[0]);
            accumulate(adjoint, n.inputs[0], reshape(up, target));
            break;
        }
        case OpKind::kLogSoftmaxRows: {
            // d = up - softmax(z) * rowsum(up); softmax recovered as exp(self)
            // so the expression stays differentiable.
            const std::size_t w = n.shape.dims[1];
            Tensor softmax = exp(self);
            accumulate(adjoint, n.inputs[0],
                       sub(up, mul(softmax, repeat_cols(row_sum(up), w))));
            break;
        }
        case OpKind::kSoftmaxCrossEntropy: {
            const Tensor logits(this, n.inputs[0]), onehot(this, n.inputs[1]);
            const Shape zs = input_shape(n.inputs[0]);
            const double inv_m = 1.0 / static_cast<double>(zs.dims[0]);
            const Tensor up_scaled = bcast_scalar(scale(up, inv_m), zs);
            const Tensor ls = log_softmax_rows(logits);
            accumulate(adjoint, n.inputs[0], mul(sub(exp(ls), onehot), up_scaled));
            accumulate(adjoint, n.inputs[1], mul(scale(ls, -1.0), up_scaled));
            break;
        }
    }
}

std::vector<Tensor> Tape::backward(const Tensor& loss, std::span<const Tensor> wrt,
                                   bool create_graph) {
    if (loss.tape() != this) throw LineageError("backward: loss lives on a different tape");
    if (loss.shape().numel() != 1)
        throw ContractError("backward: loss of shape " + loss.shape().str() + " is not a scalar");
    for (const Tensor& t : wrt) {
        if (t.tape() != this || t.node_id() >= nodes_.size())
            throw LineageError("backward: wrt tensor is not on this tape");
    }

    const std::size_t frontier = nodes_.size();

    // Ancestors of the loss.
    std::vector<char> reachable(frontier, 0);
    std::vector<std::size_t> stack{loss.node_id()};
    reachable[loss.node_id()] = 1;
    while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        for (std::size_t in : nodes_[id].inputs) {
            if (!reachable[in]) {
                reachable[in] = 1;
                stack.push_back(in);
            }
        }
    }

    std::vector<Tensor> adjoint(frontier);
    adjoint[loss.node_id()] = leaf(Array::full(loss.shape(), 1.0));
    for (std::size_t id = loss.node_id() + 1; id-- > 0;) {
        if (!reachable[id] || !adjoint[id].valid()) continue;
        push_adjoints(id, adjoint[id], adjoint);
    }

    std::vector<Tensor> grads;
    grads.reserve(wrt.size());
    if (create_graph) {
        for (const Tensor& t : wrt) {
            if (adjoint[t.node_id()].valid())
                grads.push_back(adjoint[t.node_id()]);
            else
                grads.push_back(zeros(t.shape()));
        }
        return grads;
    }

    // Detached mode: lift the gradient values out, drop the adjoint graph.
    std::vector<Array> values;
    values.reserve(wrt.size());
    for (const Tensor& t : wrt) {
        if (adjoint[t.node_id()].valid())
            values.push_back(adjoint[t.node_id()].to_array());
        else
            values.push_back(Array::zeros(t.shape()));
    }
    truncate(frontier);
    for (Array& v : values) grads.push_back(leaf(std::move(v)));
    return grads;
}

} // namespace metainit
