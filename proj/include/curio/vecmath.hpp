#ifndef CURIO_VECMATH_HPP
#define CURIO_VECMATH_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace curio {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

// Row-major dense matrix, rows x cols doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// out = M * x  (out has M.rows entries, x has M.cols)
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
    for (int r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c) s += mr[c] * x[c];
        out[r] = s;
    }
}

// out += M^T * g  (g has M.rows entries, out has M.cols)
inline void matvec_transposed_add(const Matrix& m, std::span<const double> g,
                                  std::span<double> out) {
    for (int r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        const double gr = g[r];
        for (int c = 0; c < m.cols; ++c) out[c] += gr * mr[c];
    }
}

// M += g * x^T  (outer product accumulate)
inline void outer_add(Matrix& m, std::span<const double> g, std::span<const double> x) {
    for (int r = 0; r < m.rows; ++r) {
        double* mr = m.row(r);
        const double gr = g[r];
        for (int c = 0; c < m.cols; ++c) mr[c] += gr * x[c];
    }
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

}  // namespace curio

#endif
