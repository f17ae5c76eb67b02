#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "metainit/errors.hpp"
#include "metainit/tape.hpp"
#include "testutil.hpp"

using namespace metainit;
using testutil::central_diff;
using testutil::random_array;
using testutil::rel_err;

namespace {

std::vector<double> vec(const Tensor& t) {
    auto v = t.values();
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("matmul forward") {
    Tape tape;
    auto a = tape.leaf(Array(Shape::matrix(2, 2), {1, 2, 3, 4}));
    auto b = tape.leaf(Array(Shape::matrix(2, 1), {1, 1}));
    auto c = matmul(a, b);
    CHECK(c.shape() == Shape::matrix(2, 1));
    CHECK(vec(c) == std::vector<double>{3, 7});

    // A x I == A
    auto eye = tape.leaf(Array(Shape::matrix(2, 2), {1, 0, 0, 1}));
    CHECK(vec(matmul(a, eye)) == vec(a));

    // random product against the naive dot-product oracle
    Rng rng(11);
    Array ra = random_array(Shape::matrix(3, 4), rng);
    Array rb = random_array(Shape::matrix(4, 2), rng);
    Array want = testutil::naive_matmul(ra, rb);
    auto got = matmul(tape.leaf(ra), tape.leaf(rb));
    for (std::size_t i = 0; i < want.data.size(); ++i)
        CHECK(got.values()[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape;
    auto a = tape.zeros(Shape::matrix(2, 3));
    auto b = tape.zeros(Shape::matrix(4, 2));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), DimensionError);
}

TEST_CASE("add_rowvec forward and zero bias") {
    Tape tape;
    auto a = tape.leaf(Array(Shape::matrix(1, 2), {0, 0}));
    auto b = tape.leaf(Array(Shape::vector(2), {1, 2}));
    CHECK(vec(add_rowvec(a, b)) == std::vector<double>{1, 2});

    auto c = tape.leaf(Array(Shape::matrix(2, 1), {1, 2}));
    auto zero = tape.leaf(Array(Shape::vector(1), {0}));
    CHECK(vec(add_rowvec(c, zero)) == std::vector<double>{1, 2});

    CHECK_THROWS_AS(add_rowvec(a, tape.zeros(Shape::vector(3))), DimensionError);
}

TEST_CASE("add_rowvec bias gradient is the column sum") {
    // d sum(A + 1b) / db = vector of row counts
    Tape tape;
    Rng rng(5);
    const std::size_t m = 4, n = 3;
    auto a = tape.leaf(random_array(Shape::matrix(m, n), rng));
    Array b0 = random_array(Shape::vector(n), rng);

    auto f = [&](const std::vector<double>& bv) {
        Tape t2;
        auto aa = t2.leaf(a.to_array());
        auto bb = t2.leaf(Array(Shape::vector(n), bv));
        return sum(add_rowvec(aa, bb)).value();
    };
    auto fd = central_diff(f, b0.data);

    auto b = tape.leaf(b0);
    auto loss = sum(add_rowvec(a, b));
    auto grads = tape.backward(loss, std::vector<Tensor>{b}, false);
    CHECK(rel_err(vec(grads[0]), fd) < 1e-6);
    for (double g : vec(grads[0])) CHECK(g == doctest::Approx(double(m)));
}

TEST_CASE("relu forward and subgradient") {
    Tape tape;
    auto x = tape.leaf(Array(Shape::vector(3), {-1, 0, 2}));
    CHECK(vec(relu(x)) == std::vector<double>{0, 0, 2});

    auto x1 = tape.constant(2.0);
    auto g1 = tape.backward(sum(relu(reshape(x1, Shape::vector(1)))), std::vector<Tensor>{x1}, false);
    CHECK(g1[0].value() == 1.0);
    auto x2 = tape.constant(-1.0);
    auto g2 = tape.backward(sum(relu(reshape(x2, Shape::vector(1)))), std::vector<Tensor>{x2}, false);
    CHECK(g2[0].value() == 0.0);
}

TEST_CASE("softmax cross entropy: uniform logits give exactly ln C") {
    Tape tape;
    const std::size_t m = 3, c = 4;
    auto logits = tape.leaf(Array::full(Shape::matrix(m, c), 0.25));
    Array y = Array::zeros(Shape::matrix(m, c));
    y.at(0, 1) = 1.0;
    y.at(1, 3) = 1.0;
    y.at(2, 0) = 1.0;
    auto loss = softmax_cross_entropy(logits, tape.leaf(y));
    CHECK(loss.value() == std::log(4.0));
}

TEST_CASE("softmax cross entropy: large logit does not overflow") {
    Tape tape;
    auto logits = tape.leaf(Array(Shape::matrix(1, 2), {1000.0, 0.0}));
    auto y = tape.leaf(Array(Shape::matrix(1, 2), {1.0, 0.0}));
    auto loss = softmax_cross_entropy(logits, y);
    CHECK(std::isfinite(loss.value()));
    CHECK(loss.value() < 1e-10);
}

TEST_CASE("softmax cross entropy rejects non-one-hot rows") {
    Tape tape;
    auto logits = tape.zeros(Shape::matrix(1, 3));
    CHECK_THROWS_AS(softmax_cross_entropy(logits, tape.leaf(Array(Shape::matrix(1, 3), {0.5, 0.5, 0}))),
                    ValidationError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, tape.leaf(Array(Shape::matrix(1, 3), {1, 1, 0}))),
                    ValidationError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, tape.zeros(Shape::matrix(1, 3))),
                    ValidationError);
}

TEST_CASE("softmax cross entropy gradient equals (softmax - onehot)/m") {
    Rng rng(21);
    const std::size_t m = 5, c = 3;
    Array z = random_array(Shape::matrix(m, c), rng, -2.0, 2.0);
    Array y = Array::zeros(Shape::matrix(m, c));
    for (std::size_t i = 0; i < m; ++i) y.at(i, rng.below(c)) = 1.0;

    Tape tape;
    auto zt = tape.leaf(z);
    auto loss = softmax_cross_entropy(zt, tape.leaf(y));
    auto grad = vec(tape.backward(loss, std::vector<Tensor>{zt}, false)[0]);

    // independent softmax computation
    for (std::size_t i = 0; i < m; ++i) {
        double mx = z.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z.at(i, j));
        double den = 0.0;
        for (std::size_t j = 0; j < c; ++j) den += std::exp(z.at(i, j) - mx);
        for (std::size_t j = 0; j < c; ++j) {
            const double want = (std::exp(z.at(i, j) - mx) / den - y.at(i, j)) / double(m);
            CHECK(std::fabs(grad[i * c + j] - want) < 1e-10);
        }
    }

    // and against finite differences
    auto f = [&](const std::vector<double>& zv) {
        Tape t2;
        return softmax_cross_entropy(t2.leaf(Array(Shape::matrix(m, c), zv)), t2.leaf(y)).value();
    };
    CHECK(rel_err(grad, central_diff(f, z.data)) < 1e-7);
}

TEST_CASE("backward computes d(x^2)/dx = 2x") {
    Tape tape;
    auto x = tape.constant(3.0);
    auto y = mul(x, x);
    auto g = tape.backward(y, std::vector<Tensor>{x}, false);
    CHECK(g[0].value() == 6.0);
}

TEST_CASE("backward of backward: d2(x^3)/dx2 = 6x") {
    Tape tape;
    auto x = tape.constant(2.0);
    auto y = mul(mul(x, x), x);
    auto g = tape.backward(y, std::vector<Tensor>{x}, true);
    CHECK(g[0].value() == doctest::Approx(12.0).epsilon(1e-12)); // 3x^2
    auto h = tape.backward(g[0], std::vector<Tensor>{x}, false);
    CHECK(h[0].value() == doctest::Approx(12.0).epsilon(1e-8)); // 6x
}

TEST_CASE("backward of backward: quadratic form Hessian is A + A^T") {
    Rng rng(31);
    const std::size_t n = 4;
    Array a = random_array(Shape::matrix(n, n), rng);
    Array x0 = random_array(Shape::matrix(n, 1), rng);

    Tape tape;
    auto x = tape.leaf(x0);
    auto quad = matmul(matmul(transpose(x), tape.leaf(a)), x); // 1x1
    auto g = tape.backward(reshape(quad, Shape::scalar()), std::vector<Tensor>{x}, true);
    for (std::size_t i = 0; i < n; ++i) {
        auto gi = reshape(slice_rows(g[0], i, i + 1), Shape::scalar());
        auto row = tape.backward(gi, std::vector<Tensor>{x}, false);
        for (std::size_t j = 0; j < n; ++j) {
            const double want = a.at(i, j) + a.at(j, i);
            CHECK(row[0].values()[j] == doctest::Approx(want).epsilon(1e-10));
        }
    }
}

TEST_CASE("backward without create_graph detaches and cleans the tape") {
    Tape tape;
    auto x = tape.constant(1.5);
    auto y = mul(x, x);
    const std::size_t before = tape.size();
    auto g = tape.backward(y, std::vector<Tensor>{x}, false);
    // only the detached gradient leaf remains
    CHECK(tape.size() == before + 1);
    CHECK(g[0].value() == 3.0);
}

TEST_CASE("backward contract errors") {
    Tape tape;
    auto x = tape.zeros(Shape::matrix(2, 2));
    CHECK_THROWS_AS(tape.backward(x, std::vector<Tensor>{x}, false), ContractError);

    Tape other;
    auto z = other.constant(1.0);
    auto loss = sum(x);
    CHECK_THROWS_AS(tape.backward(loss, std::vector<Tensor>{z}, false), LineageError);
    CHECK_THROWS_AS(other.backward(loss, std::vector<Tensor>{z}, false), LineageError);
}

TEST_CASE("gradient of an unreached tensor is zero") {
    Tape tape;
    auto x = tape.constant(2.0);
    auto z = tape.constant(5.0);
    auto loss = mul(x, x);
    auto g = tape.backward(loss, std::vector<Tensor>{z}, false);
    CHECK(g[0].value() == 0.0);
}

TEST_CASE("truncation restores the tape and re-recording is bitwise identical") {
    Tape tape;
    Rng rng(7);
    auto a = tape.leaf(random_array(Shape::matrix(3, 3), rng));
    auto b = tape.leaf(random_array(Shape::matrix(3, 3), rng));

    auto build = [&] {
        auto c = relu(matmul(a, b));
        return sum(mul(c, c));
    };

    const std::size_t checkpoint = tape.mark();
    auto first = build();
    const double v1 = first.value();
    const std::size_t grown = tape.size();
    tape.truncate(checkpoint);
    CHECK(tape.size() == checkpoint);

    auto second = build();
    CHECK(tape.size() == grown);
    CHECK(second.value() == v1);
    CHECK(second.node_id() == first.node_id());

    CHECK_THROWS_AS(tape.truncate(tape.size() + 1), ContractError);
}

TEST_CASE("checked mode rejects non-finite values") {
    Tape tape;
    CHECK_THROWS_AS(tape.constant(std::numeric_limits<double>::infinity()), NumericError);
    auto big = tape.constant(1e308);
    CHECK_THROWS_AS(mul(big, big), NumericError);

    Tape unchecked(false);
    auto b2 = unchecked.constant(1e308);
    CHECK_NOTHROW(mul(b2, b2));
}

// Central-difference sweep over every primitive: the module-wide gradient
// invariant (rel err < 1e-4 at h = 1e-5, off non-differentiable points).
TEST_CASE("every primitive matches central finite differences") {
    std::uint64_t seed = 1000;
    for (const auto& pc : testutil::primitive_cases()) {
        const double err = testutil::primitive_fd_error(pc, 3, seed++);
        INFO(pc.name, " rel err ", err);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("second order of the log-softmax adjoint matches finite differences") {
    // FD of g(z) = d/dz_00 [softmax CE] checks the recorded adjoint graph.
    Rng rng(77);
    const std::size_t m = 2, c = 3;
    Array z0 = random_array(Shape::matrix(m, c), rng);
    Array y = Array::zeros(Shape::matrix(m, c));
    y.at(0, 1) = 1.0;
    y.at(1, 2) = 1.0;

    auto grad00 = [&](const std::vector<double>& zv) {
        Tape t;
        auto zt = t.leaf(Array(Shape::matrix(m, c), zv));
        auto loss = softmax_cross_entropy(zt, t.leaf(y));
        auto g = t.backward(loss, std::vector<Tensor>{zt}, false);
        return g[0].values()[0];
    };
    auto fd = central_diff(grad00, z0.data);

    Tape tape;
    auto zt = tape.leaf(z0);
    auto loss = softmax_cross_entropy(zt, tape.leaf(y));
    auto g = tape.backward(loss, std::vector<Tensor>{zt}, true);
    auto g00 = reshape(slice_rows(reshape(g[0], Shape::matrix(m * c, 1)), 0, 1), Shape::scalar());
    auto h = tape.backward(g00, std::vector<Tensor>{zt}, false);
    CHECK(rel_err(vec(h[0]), fd) < 1e-4);
}
