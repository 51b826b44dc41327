#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace terragen {

std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of doubles. All kernels verify that outputs stay
// finite; a NaN or Inf anywhere is a hard error, never propagated.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(const std::vector<int>& shape);
    static Tensor full(const std::vector<int>& shape, double value);
    static Tensor scalar(double value);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    // NCHW accessor.
    double& at(int n, int c, int h, int w) {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at(int n, int c, int h, int w) const {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    // Throws if any entry is non-finite; `where` names the producing kernel.
    void check_finite(const std::string& where) const;
};

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace terragen
