#include "semimatch/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace semimatch {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) {
        if (e < 0) throw std::invalid_argument("negative extent in shape " + Tensor::shape_str(shape));
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, real fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_product(shape_)), fill) {}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<real> data) {
    if (shape_product(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

bool Tensor::all_finite() const {
    for (real v : data_) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (shape_product(new_shape) != size()) {
        throw std::invalid_argument("cannot reshape " + shape_str() + " to " + shape_str(new_shape));
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

real Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str());
    return data_[0];
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

void require_shape(const Tensor& t, const std::vector<int>& expected, const char* what) {
    if (t.shape() != expected) {
        throw std::invalid_argument(std::string(what) + ": expected shape " +
                                    Tensor::shape_str(expected) + ", got " + t.shape_str());
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch, " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

}  // namespace semimatch
