#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "uwassess/common.hpp"

namespace uwassess {

class Rng;

// Dense row-major double tensor with shared storage. Copies are shallow;
// use clone() for a deep copy. Double precision throughout so the
// finite-difference gradient checks run at full float64.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, double fill);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(std::vector<int64_t> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor from_values(std::vector<int64_t> shape, std::vector<double> values);
    static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0);

    bool defined() const { return data_ != nullptr; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const;

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    double& at(int64_t flat) { return (*data_)[static_cast<size_t>(flat)]; }
    double at(int64_t flat) const { return (*data_)[static_cast<size_t>(flat)]; }

    // 4-D convenience accessor (n, c, h, w).
    double& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
        return (*data_)[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    double at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return (*data_)[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    double& at3(int64_t a, int64_t b, int64_t c) {
        return (*data_)[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    double at3(int64_t a, int64_t b, int64_t c) const {
        return (*data_)[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }

    Tensor clone() const;
    // New shape over the same storage; element count must match.
    Tensor reshaped(std::vector<int64_t> shape) const;

    void fill(double v);
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    double min() const;
    double max() const;
    double mean() const;

    std::string shape_str() const;

private:
    std::vector<int64_t> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

}  // namespace uwassess
