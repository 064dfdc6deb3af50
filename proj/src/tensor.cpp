#include "archdiff/tensor.hpp"

#include <cmath>

#include "archdiff/errors.hpp"

namespace archdiff {

Tensor::Tensor(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(r) * c) {
        throw DimensionError("tensor: data length does not match shape");
    }
}

Tensor Tensor::full(int r, int c, double v) {
    Tensor t(r, c);
    t.fill(v);
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
}

Tensor Tensor::row(std::vector<double> d) {
    const int n = static_cast<int>(d.size());
    return Tensor(1, n, std::move(d));
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::item() const {
    if (rows != 1 || cols != 1) throw DimensionError("item: tensor is not a scalar");
    return data[0];
}

void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

double frobenius_norm_sq(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return s;
}

}  // namespace archdiff
