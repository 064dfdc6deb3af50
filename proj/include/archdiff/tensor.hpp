#pragma once

#include <cstddef>
#include <vector>

namespace archdiff {

// Dense row-major 2-D matrix of 64-bit floats. Scalars are {1,1}, row
// vectors {1,n}, column vectors {n,1}.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Tensor(int r, int c, std::vector<double> d);

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v);
    static Tensor identity(int n);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> d);

    std::size_t numel() const { return data.size(); }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
    double item() const;  // requires {1,1}

    void fill(double v);
};

double frobenius_norm_sq(const Tensor& t);

}  // namespace archdiff
