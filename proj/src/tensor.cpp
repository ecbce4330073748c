#include "fedcme/tensor.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace fedcme {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(shape_product(shape_), 0.0);
    cols_ = shape_.empty() ? 0 : shape_.back();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw DimensionError("tensor: shape product " + std::to_string(shape_product(shape_)) +
                             " != data length " + std::to_string(data_.size()));
    }
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw ValidationError("tensor: non-finite entry rejected");
        }
    }
    cols_ = shape_.empty() ? 0 : shape_.back();
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw DimensionError("tensor: rows() requires a 2-D tensor");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw DimensionError("tensor: cols() requires a 2-D tensor");
    return shape_[1];
}

}  // namespace fedcme
