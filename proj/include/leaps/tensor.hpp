#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace leaps {

// Dense row-major nd array of doubles. Shapes are small (rank <= 5).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), 0.0) {}
    Tensor(std::vector<long> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<long>(data_.size()) != numel_of(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static long numel_of(const std::vector<long>& shape) {
        long n = 1;
        for (long d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    const std::vector<long>& shape() const { return shape_; }
    long numel() const { return static_cast<long>(data_.size()); }
    long dim(int i) const { return shape_.at(i); }
    int rank() const { return static_cast<int>(shape_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](long i) { return data_[i]; }
    double operator[](long i) const { return data_[i]; }

    Tensor reshaped(std::vector<long> shape) const {
        if (numel_of(shape) != numel())
            throw std::invalid_argument("Tensor: reshape changes element count");
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s + "]";
    }

private:
    std::vector<long> shape_;
    std::vector<double> data_;
};

}  // namespace leaps
