#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "metainit/errors.hpp"

namespace metainit {

// Dense extents, rank 0 (scalar) through rank 2 (matrix).
struct Shape {
    std::vector<std::size_t> dims;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> d) : dims(d) { validate(); }
    explicit Shape(std::vector<std::size_t> d) : dims(std::move(d)) { validate(); }

    static Shape scalar() { return Shape{}; }
    static Shape vector(std::size_t n) { return Shape{n}; }
    static Shape matrix(std::size_t r, std::size_t c) { return Shape{r, c}; }

    std::size_t rank() const { return dims.size(); }

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : dims) n *= d;
        return n;
    }

    // Row/column view: a vector counts as a single row, a scalar as 1x1.
    std::size_t rows() const { return rank() == 2 ? dims[0] : 1; }
    std::size_t cols() const {
        if (rank() == 2) return dims[1];
        if (rank() == 1) return dims[0];
        return 1;
    }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        if (dims.empty()) return "scalar";
        std::string s;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i > 0) s += 'x';
            s += std::to_string(dims[i]);
        }
        return s;
    }

    void validate() const {
        if (dims.size() > 2)
            throw ValidationError("shape rank " + std::to_string(dims.size()) + " exceeds 2");
        for (std::size_t d : dims)
            if (d == 0) throw ValidationError("shape " + str() + " has a zero extent");
    }
};

// Plain value buffer with a shape; the storage type for parameters, episode
// data and file IO. Tape-free.
struct Array {
    Shape shape;
    std::vector<double> data;

    Array() = default;
    Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape.numel() != data.size())
            throw DimensionError("array data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape.str());
    }

    static Array zeros(const Shape& s) { return Array(s, std::vector<double>(s.numel(), 0.0)); }
    static Array full(const Shape& s, double v) {
        return Array(s, std::vector<double>(s.numel(), v));
    }
    static Array scalar(double v) { return Array(Shape::scalar(), {v}); }

    std::size_t numel() const { return data.size(); }

    double& at(std::size_t r, std::size_t c) { return data[r * shape.cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape.cols() + c]; }
};

// Running (Welford) mean. Exact when all inputs are bitwise identical, which
// the head-symmetry and aggregation identities rely on.
inline double running_mean(std::span<const double> xs) {
    double m = 0.0;
    double k = 0.0;
    for (double x : xs) {
        k += 1.0;
        m += (x - m) / k;
    }
    return m;
}

} // namespace metainit
