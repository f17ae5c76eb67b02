#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "metainit/array.hpp"
#include "metainit/rng.hpp"
#include "metainit/tape.hpp"

namespace testutil {

using metainit::Array;
using metainit::Rng;
using metainit::Shape;

// Central finite differences of a scalar function of a flat parameter
// vector. The independent oracle for every gradient assertion.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = f(x);
        x[i] = keep - h;
        const double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Max-norm relative disagreement between a gradient and its oracle.
inline double rel_err(const std::vector<double>& got, const std::vector<double>& want,
                      double floor = 1e-8) {
    double scale = floor;
    for (double w : want) scale = std::max(scale, std::fabs(w));
    double err = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        err = std::max(err, std::fabs(got[i] - want[i]));
    return err / scale;
}

inline Array random_array(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a = Array::zeros(shape);
    for (double& v : a.data) v = rng.uniform(lo, hi);
    return a;
}

// Reference matrix product with the classic dot-product loop order,
// deliberately different from the library's accumulation scheme.
inline Array naive_matmul(const Array& a, const Array& b) {
    const std::size_t m = a.shape.dims[0], k = a.shape.dims[1], n = b.shape.dims[1];
    Array out = Array::zeros(Shape::matrix(m, n));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a.data[i * k + p] * b.data[p * n + j];
            out.data[i * n + j] = s;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Shared finite-difference sweep over the autodiff primitives. The unit
// suite runs a few instances per primitive; the acceptance suite runs the
// full count at the pinned tolerance.

struct PrimitiveCase {
    std::string name;
    std::vector<Shape> in_shapes;
    std::function<metainit::Tensor(std::span<const metainit::Tensor>)> build;
    double lo = -1.0, hi = 1.0;
    bool offset_positive = false; // keep relu inputs away from the kink
};

std::vector<PrimitiveCase> primitive_cases();

// Worst max-norm relative error of recorded gradients vs central differences
// over `instances` random instances of one primitive.
double primitive_fd_error(const PrimitiveCase& pc, int instances, std::uint64_t seed);

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        base_ = std::filesystem::temp_directory_path() /
                ("metainit_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(base_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(base_, ec);
    }
    const std::filesystem::path& path() const { return base_; }
    std::filesystem::path operator/(const std::string& name) const { return base_ / name; }

private:
    std::filesystem::path base_;
};

} // namespace testutil
