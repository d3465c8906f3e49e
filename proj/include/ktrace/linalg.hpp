#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace ktrace {

using Vec = std::vector<double>;

/// Dense row-major matrix. Small sizes only; everything here is O(rows*cols)
/// loops with no aliasing assumptions.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }

    Vec col(int c) const {
        Vec out(rows);
        for (int r = 0; r < rows; ++r) out[r] = (*this)(r, c);
        return out;
    }
};

/// y = A x
inline Vec matvec(const Matrix& a, const Vec& x) {
    assert(static_cast<int>(x.size()) == a.cols);
    Vec y(a.rows, 0.0);
    for (int r = 0; r < a.rows; ++r) {
        double acc = 0.0;
        const double* row = a.data.data() + static_cast<std::size_t>(r) * a.cols;
        for (int c = 0; c < a.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

/// y = A^T x
inline Vec matvec_t(const Matrix& a, const Vec& x) {
    assert(static_cast<int>(x.size()) == a.rows);
    Vec y(a.cols, 0.0);
    for (int r = 0; r < a.rows; ++r) {
        const double* row = a.data.data() + static_cast<std::size_t>(r) * a.cols;
        double xr = x[r];
        for (int c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

/// A += u v^T
inline void add_outer(Matrix& a, const Vec& u, const Vec& v) {
    assert(static_cast<int>(u.size()) == a.rows && static_cast<int>(v.size()) == a.cols);
    for (int r = 0; r < a.rows; ++r) {
        double* row = a.data.data() + static_cast<std::size_t>(r) * a.cols;
        for (int c = 0; c < a.cols; ++c) row[c] += u[r] * v[c];
    }
}

inline double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// y += s x
inline void axpy(double s, const Vec& x, Vec& y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline double squared_distance(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace ktrace
