#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "core/errors.hpp"

namespace prefopt::ad {

// Dense row-major tensor of 64-bit reals. Rank 1 and 2 cover everything the
// engine needs; scalars are rank-1 tensors of size 1.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
        std::int64_t n = 1;
        for (auto d : shape_) {
            if (d <= 0) throw_invalid("tensor dimensions must be positive");
            n *= d;
        }
        data_.assign(static_cast<std::size_t>(n), 0.0);
    }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data_[0] = v;
        return t;
    }

    static Tensor from_vector(std::vector<double> v) {
        Tensor t;
        t.shape_ = {static_cast<std::int64_t>(v.size())};
        t.data_ = std::move(v);
        if (t.data_.empty()) throw_invalid("tensor must be nonempty");
        return t;
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::int64_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::int64_t r, std::int64_t c) {
        return data_[static_cast<std::size_t>(r * cols() + c)];
    }
    double at(std::int64_t r, std::int64_t c) const {
        return data_[static_cast<std::size_t>(r * cols() + c)];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

  private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

}  // namespace prefopt::ad
