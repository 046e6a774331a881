#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gnnpp/common.hpp"

namespace gnnpp {

// Dense row-major 2-D tensor of doubles. Rank-1 data is stored as [n, 1].
struct Tensor {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int rows, int cols) : n_rows(rows), n_cols(cols), v(static_cast<std::size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw ShapeError("tensor dims must be non-negative");
    }
    Tensor(int rows, int cols, std::vector<double> data)
        : n_rows(rows), n_cols(cols), v(std::move(data)) {
        if (v.size() != static_cast<std::size_t>(rows) * cols)
            throw ShapeError("tensor data size does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }

    static Tensor column(std::vector<double> data) {
        const int n = static_cast<int>(data.size());
        return Tensor(n, 1, std::move(data));
    }

    std::size_t numel() const { return v.size(); }

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * n_cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * n_cols + c]; }

    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * n_cols; }
    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * n_cols; }

    bool same_shape(const Tensor& o) const { return n_rows == o.n_rows && n_cols == o.n_cols; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double x) {
        for (double& e : v) e = x;
    }
};

inline void require_shape(const Tensor& t, int rows, int cols, const char* what) {
    if (t.n_rows != rows || t.n_cols != cols)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(t.n_rows) + "x" +
                         std::to_string(t.n_cols));
}

}  // namespace gnnpp
