#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semimatch {

// Test builds use 64-bit floats so finite-difference tolerances are
// meaningful; a training build may switch to 32-bit via the CMake option.
#ifdef SEMIMATCH_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

// Dense row-major multi-dimensional array. Immutable-by-convention once it
// enters the autodiff graph; plain value semantics everywhere else.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, real fill = real(0));
    static Tensor from_data(std::vector<int> shape, std::vector<real> data);
    static Tensor scalar(real v) { return from_data({1}, {v}); }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    std::vector<real>& values() { return data_; }
    const std::vector<real>& values() const { return data_; }

    real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    real& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    real at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    real& at(int i, int j, int k) {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    real at(int i, int j, int k) const {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    real& at(int i, int j, int k, int l) {
        return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    real at(int i, int j, int k, int l) const {
        return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Metadata-only reshape; element count must match.
    Tensor reshaped(std::vector<int> new_shape) const;

    real item() const;  // single-element tensors only

    std::string shape_str() const;
    static std::string shape_str(const std::vector<int>& shape);

private:
    std::vector<int> shape_;
    std::vector<real> data_;
};

std::int64_t shape_product(const std::vector<int>& shape);

// Throws std::invalid_argument with expected-vs-actual shapes.
void require_shape(const Tensor& t, const std::vector<int>& expected, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace semimatch
