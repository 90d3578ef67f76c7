#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fsskit/error.hpp"

namespace fsskit {

// Dense extents, channel-first for feature maps (c, h, w).
class Shape {
public:
    Shape() = default;
    explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        if (dims_.empty())
            throw DimensionError("shape must have at least one extent");
        for (std::size_t d : dims_)
            if (d == 0)
                throw DimensionError("shape extents must be >= 1, got " + str());
        (void)numel();  // overflow check up front
    }
    Shape(std::initializer_list<std::size_t> dims)
        : Shape(std::vector<std::size_t>(dims)) {}

    std::size_t rank() const { return dims_.size(); }
    std::size_t dim(std::size_t i) const { return dims_[i]; }
    const std::vector<std::size_t>& dims() const { return dims_; }

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : dims_) {
            if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d)
                throw DimensionError("shape element count overflows: " + str());
            n *= d;
        }
        return n;
    }

    bool operator==(const Shape& o) const { return dims_ == o.dims_; }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

private:
    std::vector<std::size_t> dims_;
};

// Dense row-major float32 array. Innermost axis is width.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_.numel(), 0.0f) {}
    Tensor(Shape shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.numel())
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_.str());
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.rank(); }
    std::size_t dim(std::size_t i) const { return shape_.dim(i); }
    std::size_t size() const { return data_.size(); }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    // rank-2 access (rows x cols)
    float operator()(std::size_t r, std::size_t c) const {
        return data_[r * shape_.dim(1) + c];
    }
    float& operator()(std::size_t r, std::size_t c) {
        return data_[r * shape_.dim(1) + c];
    }
    // rank-3 access (c, y, x)
    float operator()(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_.dim(1) + y) * shape_.dim(2) + x];
    }
    float& operator()(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_.dim(1) + y) * shape_.dim(2) + x];
    }

private:
    Shape shape_;
    std::vector<float> data_;
};

// 2-D {0,1} grid aligned with a feature map's spatial extents.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width)
        : h_(height), w_(width), bits_(checked_size(height, width), 0) {}
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
        : h_(height), w_(width), bits_(std::move(bits)) {
        if (bits_.size() != checked_size(h_, w_))
            throw DimensionError("mask bits length does not match " +
                                 std::to_string(h_) + "x" + std::to_string(w_));
        for (std::uint8_t b : bits_)
            if (b > 1)
                throw InvariantError("mask elements must be 0 or 1");
    }

    static BinaryMask ones(std::size_t h, std::size_t w) {
        BinaryMask m(h, w);
        std::fill(m.bits_.begin(), m.bits_.end(), std::uint8_t{1});
        return m;
    }

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    std::size_t size() const { return bits_.size(); }

    std::uint8_t at(std::size_t y, std::size_t x) const { return bits_[y * w_ + x]; }
    void set(std::size_t y, std::size_t x, bool v) { bits_[y * w_ + x] = v ? 1 : 0; }
    std::uint8_t flat(std::size_t i) const { return bits_[i]; }

    const std::vector<std::uint8_t>& bits() const { return bits_; }

    std::size_t count() const {
        std::size_t n = 0;
        for (std::uint8_t b : bits_) n += b;
        return n;
    }
    bool empty_region() const { return count() == 0; }

    bool operator==(const BinaryMask& o) const {
        return h_ == o.h_ && w_ == o.w_ && bits_ == o.bits_;
    }

private:
    static std::size_t checked_size(std::size_t h, std::size_t w) {
        if (h == 0 || w == 0)
            throw DimensionError("mask extents must be >= 1");
        if (w != 0 && h > std::numeric_limits<std::size_t>::max() / w)
            throw DimensionError("mask element count overflows");
        return h * w;
    }

    std::size_t h_ = 0, w_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline void require_same_grid(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width())
        throw DimensionError(std::string(what) + ": mask grids differ, " +
                             std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                             " vs " + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()));
}

}  // namespace fsskit
