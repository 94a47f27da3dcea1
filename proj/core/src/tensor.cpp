#include "uwassess/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace uwassess {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(static_cast<size_t>(shape_numel(shape_)), 0.0)) {}

Tensor::Tensor(std::vector<int64_t> shape, double fill)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(static_cast<size_t>(shape_numel(shape_)), fill)) {}

Tensor Tensor::from_values(std::vector<int64_t> shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
        throw InvariantViolation("Tensor::from_values: element count does not match shape");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(values));
    return t;
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double stddev) {
    Tensor t{std::move(shape)};
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, stddev);
    return t;
}

int64_t Tensor::numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    if (data_) t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel()) {
        throw InvariantViolation("Tensor::reshaped: element count mismatch " + shape_str());
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void Tensor::fill(double v) {
    if (data_) std::fill(data_->begin(), data_->end(), v);
}

bool Tensor::all_finite() const {
    if (!data_) return true;
    return std::all_of(data_->begin(), data_->end(), [](double x) { return std::isfinite(x); });
}

double Tensor::min() const {
    return *std::min_element(data_->begin(), data_->end());
}

double Tensor::max() const {
    return *std::max_element(data_->begin(), data_->end());
}

double Tensor::mean() const {
    if (!data_ || data_->empty()) return 0.0;
    return std::accumulate(data_->begin(), data_->end(), 0.0) / static_cast<double>(data_->size());
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (is.fail()) throw ConfigError("Rng::deserialize: malformed engine state");
}

}  // namespace uwassess
