#pragma once

#include <cstddef>
#include <vector>

#include "fedcme/errors.hpp"

namespace fedcme {

// Dense row-major 64-bit float array. The substrate for parameters,
// activations, per-class features and evaluation vectors.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    // Checked construction: shape/data length must agree and every entry
    // must be finite.
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors; most of the kernel works on [rows x cols] tensors.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::size_t cols_ = 0;  // cached innermost dimension for at()
};

}  // namespace fedcme
