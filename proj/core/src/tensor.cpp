#include "sphnet/tensor.hpp"

#include <cmath>
#include <utility>

#include "sphnet/errors.hpp"

namespace sphnet {

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int Tensor::rows() const {
    if (ndim() == 1) return 1;
    if (ndim() == 2) return shape_[0];
    throw ShapeError("rows(): tensor " + shape_str() + " is not 2-D");
}

int Tensor::cols() const {
    if (ndim() == 1) return shape_[0];
    if (ndim() == 2) return shape_[1];
    throw ShapeError("cols(): tensor " + shape_str() + " is not 2-D");
}

double& Tensor::at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }

double Tensor::at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (shape_product(new_shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str() + " to " + shape_to_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace sphnet
