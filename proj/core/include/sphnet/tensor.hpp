#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sphnet {

// Dense row-major tensor of doubles. Rank is arbitrary but the model only ever
// builds rank-1 and rank-2 tensors. Immutable-by-convention once handed to a Tape.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor identity(int n);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // 2-D accessors (rank-1 tensors count as a single row).
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    // Same data, new shape; element counts must agree.
    Tensor reshaped(std::vector<int> new_shape) const;

    bool all_finite() const;
    std::string shape_str() const;  // e.g. "[2x3]"

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

  private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

}  // namespace sphnet
