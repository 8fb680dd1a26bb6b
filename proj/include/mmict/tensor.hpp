#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmict {

// Dense row-major matrix of doubles. Vectors are 1 x n.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }

    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor row(std::vector<double> v) {
        Tensor t;
        t.rows = 1;
        t.cols = static_cast<int>(v.size());
        t.data = std::move(v);
        return t;
    }

    static Tensor randn(int r, int c, std::uint64_t seed, double stddev = 1.0) {
        Tensor t(r, c);
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> nd(0.0, stddev);
        for (auto& x : t.data) x = nd(gen);
        return t;
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t numel() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    double l2_norm() const {
        double s = 0.0;
        for (double x : data) s += x * x;
        return std::sqrt(s);
    }

    void scale(double a) {
        for (double& x : data) x *= a;
    }

    void add_scaled(const Tensor& o, double a) {
        for (size_t i = 0; i < data.size(); ++i) data[i] += a * o.data[i];
    }
};

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

// a (m x k) * b (k x n) -> (m x n)
inline Tensor matmul_values(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " * " +
                                    b.shape_str());
    Tensor out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            double av = a.at(i, k);
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
            double* orow = &out.data[static_cast<size_t>(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

inline Tensor transpose_values(const Tensor& a) {
    Tensor out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

}  // namespace mmict
