#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace roadtagger {

// Dense row-major tensor of 64-bit floats. Rank is 1 or 2 in practice;
// a scalar is represented as shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool is_scalar() const { return size() == 1; }

    // 2-D accessors; a rank-1 tensor counts as a single row.
    int rows() const { return rank() >= 2 ? shape_[0] : 1; }
    int cols() const { return rank() >= 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(int i) { return data_[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data_[static_cast<std::size_t>(i)]; }
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    double item() const;  // scalar value; throws unless size() == 1

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double v);
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace roadtagger
