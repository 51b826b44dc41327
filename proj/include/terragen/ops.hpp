#pragma once

#include <vector>

#include "terragen/autograd.hpp"

namespace terragen {

// Differentiable kernel set. Shapes follow standard conventions
// (matrices row-major, images NCHW, conv weights OIHW). Every kernel
// validates shapes and rejects non-finite outputs.

Var constant(Tensor t);

// Elementwise with right-aligned broadcasting (dims equal or 1).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var matmul(const Var& a, const Var& b);  // (m,k) x (k,n) -> (m,n)
Var transpose2d(const Var& a);

// x (N,Ci,H,W), w (Co,Ci,KH,KW), bias (Co) or null; zero padding.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);

Var upsample_nearest2x(const Var& x);
Var adaptive_avg_pool_1x1(const Var& x);  // (N,C,H,W) -> (N,C)

Var softmax(const Var& x, int axis);
Var silu(const Var& x);
Var relu(const Var& x);

// Normalizes within each (sample, channel-group) slice; no affine part,
// apply scale/shift with mul/add. groups == C gives instance norm.
Var group_norm(const Var& x, int groups, double eps = 1e-5);

Var embedding(const Var& table, const std::vector<int>& ids);  // (V,D) -> (n,D)

Var concat(const std::vector<Var>& xs, int axis);
Var narrow(const Var& x, int axis, int start, int len);
Var reshape(const Var& x, const std::vector<int>& shape);

Var sum_all(const Var& x);   // -> [1]
Var mean_all(const Var& x);  // -> [1]

// Value copied into a fresh constant leaf; gradient does not flow back.
Var detach(const Var& x);

// x (n,in) * w (in,out) + b (out); b may be null.
Var linear(const Var& x, const Var& w, const Var& b);

}  // namespace terragen
