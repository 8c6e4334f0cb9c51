// Dense rank-4 real tensor (height x width x channels x batch) used for
// network activations and gradients. Layout is batch-major with channels
// fastest, so per-pixel channel vectors are contiguous.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace irsce {

struct TensorShape {
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t channels = 1;
    std::size_t batch = 1;

    std::size_t count() const { return height * width * channels * batch; }

    friend bool operator==(const TensorShape& a, const TensorShape& b) {
        return a.height == b.height && a.width == b.width && a.channels == b.channels &&
               a.batch == b.batch;
    }
};

class RealTensor {
  public:
    RealTensor() = default;

    explicit RealTensor(TensorShape shape) : shape_(shape), v_(shape.count(), 0.0) {
        if (shape.height < 1 || shape.width < 1 || shape.channels < 1 || shape.batch < 1)
            throw std::invalid_argument("RealTensor: all dimensions must be >= 1");
    }

    RealTensor(std::size_t h, std::size_t w, std::size_t c, std::size_t b = 1)
        : RealTensor(TensorShape{h, w, c, b}) {}

    const TensorShape& shape() const { return shape_; }
    std::size_t size() const { return v_.size(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    std::size_t index(std::size_t i, std::size_t j, std::size_t ch, std::size_t n = 0) const {
        return ((n * shape_.height + i) * shape_.width + j) * shape_.channels + ch;
    }

    double& at(std::size_t i, std::size_t j, std::size_t ch, std::size_t n = 0) {
        return v_[index(i, j, ch, n)];
    }
    double at(std::size_t i, std::size_t j, std::size_t ch, std::size_t n = 0) const {
        return v_[index(i, j, ch, n)];
    }

    // Pointer to the channel vector at (n, i, j).
    double* pixel(std::size_t i, std::size_t j, std::size_t n) { return v_.data() + index(i, j, 0, n); }
    const double* pixel(std::size_t i, std::size_t j, std::size_t n) const {
        return v_.data() + index(i, j, 0, n);
    }

    // Copies batch element src_n of `src` into slot dst_n of this tensor.
    void set_batch_item(std::size_t dst_n, const RealTensor& src, std::size_t src_n = 0) {
        const std::size_t per = shape_.height * shape_.width * shape_.channels;
        if (src.shape_.height != shape_.height || src.shape_.width != shape_.width ||
            src.shape_.channels != shape_.channels)
            throw std::invalid_argument("RealTensor::set_batch_item: shape mismatch");
        const double* s = src.v_.data() + src_n * per;
        double* d = v_.data() + dst_n * per;
        for (std::size_t i = 0; i < per; ++i) d[i] = s[i];
    }

    friend bool operator==(const RealTensor& a, const RealTensor& b) {
        return a.shape_ == b.shape_ && a.v_ == b.v_;
    }

  private:
    TensorShape shape_;
    std::vector<double> v_;
};

inline double max_abs_diff(const RealTensor& a, const RealTensor& b) {
    if (!(a.shape() == b.shape()))
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s = std::max(s, std::abs(a.values()[i] - b.values()[i]));
    return s;
}

}  // namespace irsce
