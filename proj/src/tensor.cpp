#include "terragen/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace terragen {

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
}

Tensor Tensor::full(const std::vector<int>& shape, double value) {
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

void Tensor::check_finite(const std::string& where) const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(where + ": non-finite value in output tensor " + shape_str(shape));
        }
    }
}

}  // namespace terragen
