#include "terragen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace terragen {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a.shape) + " and " +
                                shape_str(b.shape));
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const std::string& what) {
    throw std::invalid_argument(op + ": " + what + ", got " + shape_str(a.shape));
}

std::vector<int> broadcast_shape(const std::string& op, const Tensor& a, const Tensor& b) {
    int nd = std::max(a.ndim(), b.ndim());
    std::vector<int> out(nd);
    for (int i = 0; i < nd; ++i) {
        int da = i < nd - a.ndim() ? 1 : a.shape[i - (nd - a.ndim())];
        int db = i < nd - b.ndim() ? 1 : b.shape[i - (nd - b.ndim())];
        if (da != db && da != 1 && db != 1) shape_error(op, a, b);
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides padded to nd dims, with 0 on broadcast dims.
std::vector<int64_t> broadcast_strides(const Tensor& t, const std::vector<int>& out_shape) {
    int nd = static_cast<int>(out_shape.size());
    int off = nd - t.ndim();
    std::vector<int64_t> strides(nd, 0);
    int64_t s = 1;
    for (int i = t.ndim() - 1; i >= 0; --i) {
        strides[i + off] = (t.shape[i] == 1) ? 0 : s;
        s *= t.shape[i];
    }
    for (int i = 0; i < nd; ++i) {
        if (i < off) strides[i] = 0;
    }
    return strides;
}

// Odometer walk over out_shape applying f(out_index, a_index, b_index).
template <typename F>
void broadcast_walk(const std::vector<int>& out_shape, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, F&& f) {
    int nd = static_cast<int>(out_shape.size());
    int64_t total = shape_numel(out_shape);
    std::vector<int> coord(nd, 0);
    int64_t ia = 0, ib = 0;
    for (int64_t io = 0; io < total; ++io) {
        f(io, ia, ib);
        for (int d = nd - 1; d >= 0; --d) {
            ++coord[d];
            ia += sa[d];
            ib += sb[d];
            if (coord[d] < out_shape[d]) break;
            ia -= static_cast<int64_t>(coord[d]) * sa[d];
            ib -= static_cast<int64_t>(coord[d]) * sb[d];
            coord[d] = 0;
        }
    }
}

enum class BinOp { Add, Sub, Mul };

Var binary_op(const std::string& name, BinOp kind, const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    Tensor out;
    bool same = av.shape == bv.shape;
    if (same) {
        out = Tensor::zeros(av.shape);
        const double* pa = av.data.data();
        const double* pb = bv.data.data();
        double* po = out.data.data();
        int64_t n = av.numel();
        switch (kind) {
            case BinOp::Add:
                for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
                break;
            case BinOp::Sub:
                for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
                break;
            case BinOp::Mul:
                for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
                break;
        }
    } else {
        std::vector<int> os = broadcast_shape(name, av, bv);
        auto sa = broadcast_strides(av, os);
        auto sb = broadcast_strides(bv, os);
        out = Tensor::zeros(os);
        const double* pa = av.data.data();
        const double* pb = bv.data.data();
        double* po = out.data.data();
        switch (kind) {
            case BinOp::Add:
                broadcast_walk(os, sa, sb, [&](int64_t io, int64_t ia, int64_t ib) { po[io] = pa[ia] + pb[ib]; });
                break;
            case BinOp::Sub:
                broadcast_walk(os, sa, sb, [&](int64_t io, int64_t ia, int64_t ib) { po[io] = pa[ia] - pb[ib]; });
                break;
            case BinOp::Mul:
                broadcast_walk(os, sa, sb, [&](int64_t io, int64_t ia, int64_t ib) { po[io] = pa[ia] * pb[ib]; });
                break;
        }
    }

    return make_node(std::move(out), {a, b}, [name, kind, a, b](Node& self) {
        const Tensor& g = self.grad;
        bool need_a = a->requires_grad;
        bool need_b = b->requires_grad;
        if (need_a) a->ensure_grad();
        if (need_b) b->ensure_grad();
        double* ga = need_a ? a->grad.data.data() : nullptr;
        double* gb = need_b ? b->grad.data.data() : nullptr;
        const double* pg = g.data.data();
        const double* pa = a->value.data.data();
        const double* pb = b->value.data.data();
        if (a->value.shape == b->value.shape) {
            int64_t n = g.numel();
            switch (kind) {
                case BinOp::Add:
                    if (need_a)
                        for (int64_t i = 0; i < n; ++i) ga[i] += pg[i];
                    if (need_b)
                        for (int64_t i = 0; i < n; ++i) gb[i] += pg[i];
                    break;
                case BinOp::Sub:
                    if (need_a)
                        for (int64_t i = 0; i < n; ++i) ga[i] += pg[i];
                    if (need_b)
                        for (int64_t i = 0; i < n; ++i) gb[i] -= pg[i];
                    break;
                case BinOp::Mul:
                    if (need_a)
                        for (int64_t i = 0; i < n; ++i) ga[i] += pg[i] * pb[i];
                    if (need_b)
                        for (int64_t i = 0; i < n; ++i) gb[i] += pg[i] * pa[i];
                    break;
            }
            return;
        }
        auto sa = broadcast_strides(a->value, self.value.shape);
        auto sb = broadcast_strides(b->value, self.value.shape);
        broadcast_walk(self.value.shape, sa, sb, [&](int64_t io, int64_t ia, int64_t ib) {
            switch (kind) {
                case BinOp::Add:
                    if (need_a) ga[ia] += pg[io];
                    if (need_b) gb[ib] += pg[io];
                    break;
                case BinOp::Sub:
                    if (need_a) ga[ia] += pg[io];
                    if (need_b) gb[ib] -= pg[io];
                    break;
                case BinOp::Mul:
                    if (need_a) ga[ia] += pg[io] * pb[ib];
                    if (need_b) gb[ib] += pg[io] * pa[ia];
                    break;
            }
        });
    }, name);
}

}  // namespace

Var constant(Tensor t) { return make_leaf(std::move(t), false); }

Var add(const Var& a, const Var& b) { return binary_op("add", BinOp::Add, a, b); }
Var sub(const Var& a, const Var& b) { return binary_op("sub", BinOp::Sub, a, b); }
Var mul(const Var& a, const Var& b) { return binary_op("mul", BinOp::Mul, a, b); }

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v *= s;
    return make_node(std::move(out), {a}, [a, s](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const double* pg = self.grad.data.data();
        double* ga = a->grad.data.data();
        int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) ga[i] += s * pg[i];
    }, "scale");
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v += s;
    return make_node(std::move(out), {a}, [a](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const double* pg = self.grad.data.data();
        double* ga = a->grad.data.data();
        int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) ga[i] += pg[i];
    }, "add_scalar");
}

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.ndim() != 2 || bv.ndim() != 2 || av.shape[1] != bv.shape[0]) shape_error("matmul", av, bv);
    int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out = Tensor::zeros({m, n});
    const double* pa = av.data.data();
    const double* pb = bv.data.data();
    double* po = out.data.data();
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            double aik = pa[static_cast<int64_t>(i) * k + kk];
            const double* brow = pb + static_cast<int64_t>(kk) * n;
            double* orow = po + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return make_node(std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
        const double* pg = self.grad.data.data();
        if (a->requires_grad) {
            a->ensure_grad();
            double* ga = a->grad.data.data();
            const double* pb = b->value.data.data();
            // da = g . b^T
            for (int i = 0; i < m; ++i) {
                const double* grow = pg + static_cast<int64_t>(i) * n;
                double* garow = ga + static_cast<int64_t>(i) * k;
                for (int kk = 0; kk < k; ++kk) {
                    const double* brow = pb + static_cast<int64_t>(kk) * n;
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    garow[kk] += acc;
                }
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            double* gb = b->grad.data.data();
            const double* pa = a->value.data.data();
            // db = a^T . g
            for (int i = 0; i < m; ++i) {
                const double* arow = pa + static_cast<int64_t>(i) * k;
                const double* grow = pg + static_cast<int64_t>(i) * n;
                for (int kk = 0; kk < k; ++kk) {
                    double av_ = arow[kk];
                    double* gbrow = gb + static_cast<int64_t>(kk) * n;
                    for (int j = 0; j < n; ++j) gbrow[j] += av_ * grow[j];
                }
            }
        }
    }, "matmul");
}

Var transpose2d(const Var& a) {
    const Tensor& av = a->value;
    if (av.ndim() != 2) shape_error("transpose2d", av, "expected 2-D");
    int m = av.shape[0], n = av.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
    return make_node(std::move(out), {a}, [a, m, n](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad.at(i, j) += self.grad.at(j, i);
    }, "transpose2d");
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.ndim() != 4 || wv.ndim() != 4) shape_error("conv2d", xv, wv);
    if (xv.shape[1] != wv.shape[1]) shape_error("conv2d", xv, wv);
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    int N = xv.shape[0], Ci = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    int Co = wv.shape[0], KH = wv.shape[2], KW = wv.shape[3];
    if (bias && (bias->value.ndim() != 1 || bias->value.shape[0] != Co)) shape_error("conv2d", wv, bias->value);
    int Ho = (H + 2 * pad - KH) / stride + 1;
    int Wo = (W + 2 * pad - KW) / stride + 1;
    if (Ho <= 0 || Wo <= 0) shape_error("conv2d", xv, wv);

    Tensor out = Tensor::zeros({N, Co, Ho, Wo});
    const double* px = xv.data.data();
    const double* pw = wv.data.data();
    double* po = out.data.data();

    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            double b = bias ? bias->value[co] : 0.0;
            bool fused3 = KW == 3 && pad == 1 && W >= 2 && (stride == 1 || W % 2 == 0);
            for (int ho = 0; ho < Ho; ++ho) {
                double* orow = po + (((static_cast<int64_t>(n) * Co + co) * Ho + ho) * Wo);
                for (int wo = 0; wo < Wo; ++wo) orow[wo] = b;
                for (int ci = 0; ci < Ci; ++ci) {
                    for (int kh = 0; kh < KH; ++kh) {
                        int hi = ho * stride + kh - pad;
                        if (hi < 0 || hi >= H) continue;
                        const double* xrow = px + (((static_cast<int64_t>(n) * Ci + ci) * H + hi) * W);
                        const double* wrow = pw + (((static_cast<int64_t>(co) * Ci + ci) * KH + kh) * KW);
                        if (fused3) {
                            // single pass, all three taps in registers
                            double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                            if (stride == 1) {
                                orow[0] += w1 * xrow[0] + w2 * xrow[1];
                                for (int wo = 1; wo < Wo - 1; ++wo) {
                                    orow[wo] += w0 * xrow[wo - 1] + w1 * xrow[wo] + w2 * xrow[wo + 1];
                                }
                                if (Wo > 1) orow[Wo - 1] += w0 * xrow[Wo - 2] + w1 * xrow[Wo - 1];
                            } else {
                                orow[0] += w1 * xrow[0] + w2 * xrow[1];
                                for (int wo = 1; wo < Wo; ++wo) {
                                    const double* xc = xrow + 2 * wo;
                                    orow[wo] += w0 * xc[-1] + w1 * xc[0] + w2 * xc[1];
                                }
                            }
                            continue;
                        }
                        for (int kw = 0; kw < KW; ++kw) {
                            double wgt = wrow[kw];
                            // wo range with wi = wo*stride + kw - pad inside [0, W)
                            int num = W - 1 - kw + pad;
                            if (num < 0) continue;
                            int lo = std::max(0, (pad - kw + stride - 1) / stride);
                            int hi_w = std::min(Wo - 1, num / stride);
                            const double* xoff = xrow + kw - pad;
                            if (stride == 1) {
                                for (int wo = lo; wo <= hi_w; ++wo) orow[wo] += wgt * xoff[wo];
                            } else {
                                for (int wo = lo; wo <= hi_w; ++wo) orow[wo] += wgt * xoff[2 * wo];
                            }
                        }
                    }
                }
            }
        }
    }

    return make_node(std::move(out), {x, w, bias}, [x, w, bias, stride, pad, N, Ci, H, W, Co, KH, KW, Ho,
                                                    Wo](Node& self) {
        const double* pg = self.grad.data.data();
        if (x->requires_grad) {
            x->ensure_grad();
            double* gx = x->grad.data.data();
            const double* pw = w->value.data.data();
            bool fused3 = KW == 3 && pad == 1 && W >= 2 && stride == 1 && Wo == W;
            for (int n = 0; n < N; ++n) {
                for (int ci = 0; ci < Ci; ++ci) {
                    for (int co = 0; co < Co; ++co) {
                        for (int kh = 0; kh < KH; ++kh) {
                            for (int ho = 0; ho < Ho; ++ho) {
                                int hi = ho * stride + kh - pad;
                                if (hi < 0 || hi >= H) continue;
                                double* gxrow = gx + (((static_cast<int64_t>(n) * Ci + ci) * H + hi) * W);
                                const double* grow = pg + (((static_cast<int64_t>(n) * Co + co) * Ho + ho) * Wo);
                                const double* wrow = pw + (((static_cast<int64_t>(co) * Ci + ci) * KH + kh) * KW);
                                if (fused3) {
                                    // dx[wi] = sum_kw w[kw] dy[wi - kw + 1]
                                    double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                                    gxrow[0] += w1 * grow[0] + w0 * grow[1];
                                    for (int wi = 1; wi < W - 1; ++wi) {
                                        gxrow[wi] += w2 * grow[wi - 1] + w1 * grow[wi] + w0 * grow[wi + 1];
                                    }
                                    if (W > 1) gxrow[W - 1] += w2 * grow[W - 2] + w1 * grow[W - 1];
                                    continue;
                                }
                                for (int kw = 0; kw < KW; ++kw) {
                                    double wgt = wrow[kw];
                                    int num = W - 1 - kw + pad;
                                    if (num < 0) continue;
                                    int lo = std::max(0, (pad - kw + stride - 1) / stride);
                                    int hi_w = std::min(Wo - 1, num / stride);
                                    double* gxoff = gxrow + kw - pad;
                                    for (int wo = lo; wo <= hi_w; ++wo) gxoff[wo * stride] += wgt * grow[wo];
                                }
                            }
                        }
                    }
                }
            }
        }
        if (w->requires_grad) {
            w->ensure_grad();
            double* gw = w->grad.data.data();
            const double* px = x->value.data.data();
            bool fused3 = KW == 3 && pad == 1 && W >= 2 && stride == 1 && Wo == W;
            for (int co = 0; co < Co; ++co) {
                for (int n = 0; n < N; ++n) {
                    for (int ci = 0; ci < Ci; ++ci) {
                        for (int kh = 0; kh < KH; ++kh) {
                            for (int ho = 0; ho < Ho; ++ho) {
                                int hi = ho * stride + kh - pad;
                                if (hi < 0 || hi >= H) continue;
                                const double* xrow = px + (((static_cast<int64_t>(n) * Ci + ci) * H + hi) * W);
                                const double* grow = pg + (((static_cast<int64_t>(n) * Co + co) * Ho + ho) * Wo);
                                double* gwrow = gw + (((static_cast<int64_t>(co) * Ci + ci) * KH + kh) * KW);
                                if (fused3) {
                                    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                                    a1 += xrow[0] * grow[0];
                                    a2 += xrow[1] * grow[0];
                                    for (int wo = 1; wo < W - 1; ++wo) {
                                        double g = grow[wo];
                                        a0 += xrow[wo - 1] * g;
                                        a1 += xrow[wo] * g;
                                        a2 += xrow[wo + 1] * g;
                                    }
                                    if (W > 1) {
                                        double g = grow[W - 1];
                                        a0 += xrow[W - 2] * g;
                                        a1 += xrow[W - 1] * g;
                                    }
                                    gwrow[0] += a0;
                                    gwrow[1] += a1;
                                    gwrow[2] += a2;
                                    continue;
                                }
                                for (int kw = 0; kw < KW; ++kw) {
                                    int num = W - 1 - kw + pad;
                                    if (num < 0) continue;
                                    int lo = std::max(0, (pad - kw + stride - 1) / stride);
                                    int hi_w = std::min(Wo - 1, num / stride);
                                    const double* xoff = xrow + kw - pad;
                                    double acc = 0.0;
                                    for (int wo = lo; wo <= hi_w; ++wo) acc += xoff[wo * stride] * grow[wo];
                                    gwrow[kw] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        if (bias && bias->requires_grad) {
            bias->ensure_grad();
            double* gb = bias->grad.data.data();
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Co; ++co) {
                    const double* grow = pg + ((static_cast<int64_t>(n) * Co + co) * Ho) * Wo;
                    double acc = 0.0;
                    for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) acc += grow[i];
                    gb[co] += acc;
                }
        }
    }, "conv2d");
}

Var upsample_nearest2x(const Var& x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 4) shape_error("upsample_nearest2x", xv, "expected NCHW");
    int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    Tensor out = Tensor::zeros({N, C, H * 2, W * 2});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < 2 * H; ++h)
                for (int w = 0; w < 2 * W; ++w) out.at(n, c, h, w) = xv.at(n, c, h / 2, w / 2);
    return make_node(std::move(out), {x}, [x, N, C, H, W](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < 2 * H; ++h)
                    for (int w = 0; w < 2 * W; ++w) x->grad.at(n, c, h / 2, w / 2) += self.grad.at(n, c, h, w);
    }, "upsample_nearest2x");
}

Var adaptive_avg_pool_1x1(const Var& x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 4) shape_error("adaptive_avg_pool_1x1", xv, "expected NCHW");
    int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    Tensor out = Tensor::zeros({N, C});
    double inv = 1.0 / (static_cast<double>(H) * W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) acc += xv.at(n, c, h, w);
            out.at(n, c) = acc * inv;
        }
    return make_node(std::move(out), {x}, [x, N, C, H, W, inv](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                double g = self.grad.at(n, c) * inv;
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) x->grad.at(n, c, h, w) += g;
            }
    }, "adaptive_avg_pool_1x1");
}

namespace {

// Decompose shape around `axis` into outer x len x inner.
void axis_split(const Tensor& t, int axis, int64_t& outer, int64_t& len, int64_t& inner) {
    outer = 1;
    inner = 1;
    len = t.shape[axis];
    for (int i = 0; i < axis; ++i) outer *= t.shape[i];
    for (int i = axis + 1; i < t.ndim(); ++i) inner *= t.shape[i];
}

}  // namespace

Var softmax(const Var& x, int axis) {
    const Tensor& xv = x->value;
    if (axis < 0 || axis >= xv.ndim()) shape_error("softmax", xv, "axis out of range");
    int64_t outer, len, inner;
    axis_split(xv, axis, outer, len, inner);
    Tensor out = Tensor::zeros(xv.shape);
    const double* px = xv.data.data();
    double* po = out.data.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const double* sx = px + o * len * inner + in;
            double* so = po + o * len * inner + in;
            double mx = sx[0];
            for (int64_t l = 1; l < len; ++l) mx = std::max(mx, sx[l * inner]);
            double sum = 0.0;
            for (int64_t l = 0; l < len; ++l) {
                double e = std::exp(sx[l * inner] - mx);
                so[l * inner] = e;
                sum += e;
            }
            double invsum = 1.0 / sum;
            for (int64_t l = 0; l < len; ++l) so[l * inner] *= invsum;
        }
    }
    return make_node(std::move(out), {x}, [x, outer, len, inner](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double* py = self.value.data.data();
        const double* pg = self.grad.data.data();
        double* gx = x->grad.data.data();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const double* sy = py + o * len * inner + in;
                const double* sg = pg + o * len * inner + in;
                double* sgx = gx + o * len * inner + in;
                double dot = 0.0;
                for (int64_t l = 0; l < len; ++l) dot += sg[l * inner] * sy[l * inner];
                for (int64_t l = 0; l < len; ++l) sgx[l * inner] += sy[l * inner] * (sg[l * inner] - dot);
            }
        }
    }, "softmax");
}

Var silu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = v / (1.0 + std::exp(-v));
    return make_node(std::move(out), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double* px = x->value.data.data();
        const double* pg = self.grad.data.data();
        double* gx = x->grad.data.data();
        int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) {
            double s = 1.0 / (1.0 + std::exp(-px[i]));
            gx[i] += pg[i] * s * (1.0 + px[i] * (1.0 - s));
        }
    }, "silu");
}

Var relu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_node(std::move(out), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double* px = x->value.data.data();
        const double* pg = self.grad.data.data();
        double* gx = x->grad.data.data();
        int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i)
            if (px[i] > 0.0) gx[i] += pg[i];
    }, "relu");
}

Var group_norm(const Var& x, int groups, double eps) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 4) shape_error("group_norm", xv, "expected NCHW");
    int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    if (groups <= 0 || C % groups != 0) {
        throw std::invalid_argument("group_norm: channels " + std::to_string(C) +
                                    " not divisible by groups " + std::to_string(groups));
    }
    int64_t slice = static_cast<int64_t>(C / groups) * H * W;
    Tensor out = Tensor::zeros(xv.shape);
    Tensor inv_std = Tensor::zeros({N, groups});
    const double* px = xv.data.data();
    double* po = out.data.data();
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const double* sx = px + (static_cast<int64_t>(n) * groups + g) * slice;
            double* so = po + (static_cast<int64_t>(n) * groups + g) * slice;
            double mean = 0.0;
            for (int64_t i = 0; i < slice; ++i) mean += sx[i];
            mean /= static_cast<double>(slice);
            double var = 0.0;
            for (int64_t i = 0; i < slice; ++i) {
                double d = sx[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(slice);
            double istd = 1.0 / std::sqrt(var + eps);
            inv_std.at(n, g) = istd;
            for (int64_t i = 0; i < slice; ++i) so[i] = (sx[i] - mean) * istd;
        }
    }
    return make_node(std::move(out), {x}, [x, N, groups, slice, inv_std](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double* py = self.value.data.data();  // normalized values
        const double* pg = self.grad.data.data();
        double* gx = x->grad.data.data();
        for (int n = 0; n < N; ++n) {
            for (int g = 0; g < groups; ++g) {
                const double* sy = py + (static_cast<int64_t>(n) * groups + g) * slice;
                const double* sg = pg + (static_cast<int64_t>(n) * groups + g) * slice;
                double* sgx = gx + (static_cast<int64_t>(n) * groups + g) * slice;
                double gmean = 0.0, gymean = 0.0;
                for (int64_t i = 0; i < slice; ++i) {
                    gmean += sg[i];
                    gymean += sg[i] * sy[i];
                }
                gmean /= static_cast<double>(slice);
                gymean /= static_cast<double>(slice);
                double istd = inv_std.at(n, g);
                for (int64_t i = 0; i < slice; ++i) {
                    sgx[i] += istd * (sg[i] - gmean - sy[i] * gymean);
                }
            }
        }
    }, "group_norm");
}

Var embedding(const Var& table, const std::vector<int>& ids) {
    const Tensor& tv = table->value;
    if (tv.ndim() != 2) shape_error("embedding", tv, "expected 2-D table");
    int V = tv.shape[0], D = tv.shape[1];
    for (int id : ids) {
        if (id < 0 || id >= V) {
            throw std::invalid_argument("embedding: id " + std::to_string(id) + " out of table size " +
                                        std::to_string(V));
        }
    }
    int n = static_cast<int>(ids.size());
    Tensor out = Tensor::zeros({n, D});
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < D; ++d) out.at(i, d) = tv.at(ids[i], d);
    return make_node(std::move(out), {table}, [table, ids, D](Node& self) {
        if (!table->requires_grad) return;
        table->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int d = 0; d < D; ++d) table->grad.at(ids[i], d) += self.grad.at(static_cast<int>(i), d);
    }, "embedding");
}

Var concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: empty input list");
    const Tensor& first = xs[0]->value;
    if (axis < 0 || axis >= first.ndim()) shape_error("concat", first, "axis out of range");
    std::vector<int> out_shape = first.shape;
    int total_axis = 0;
    for (const auto& v : xs) {
        const Tensor& t = v->value;
        if (t.ndim() != first.ndim()) shape_error("concat", first, t);
        for (int i = 0; i < t.ndim(); ++i)
            if (i != axis && t.shape[i] != first.shape[i]) shape_error("concat", first, t);
        total_axis += t.shape[axis];
    }
    out_shape[axis] = total_axis;
    Tensor out = Tensor::zeros(out_shape);

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int i = axis + 1; i < static_cast<int>(out_shape.size()); ++i) inner *= out_shape[i];

    int64_t off = 0;
    for (const auto& v : xs) {
        int64_t len = v->value.shape[axis];
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = v->value.data.data() + o * len * inner;
            double* dst = out.data.data() + (o * total_axis + off) * inner;
            std::copy(src, src + len * inner, dst);
        }
        off += len;
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make_node(std::move(out), parents, [xs, axis, outer, inner, total_axis](Node& self) {
        int64_t off = 0;
        for (const auto& v : xs) {
            int64_t len = v->value.shape[axis];
            if (v->requires_grad) {
                v->ensure_grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const double* src = self.grad.data.data() + (o * total_axis + off) * inner;
                    double* dst = v->grad.data.data() + o * len * inner;
                    for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                }
            }
            off += len;
        }
    }, "concat");
}

Var narrow(const Var& x, int axis, int start, int len) {
    const Tensor& xv = x->value;
    if (axis < 0 || axis >= xv.ndim()) shape_error("narrow", xv, "axis out of range");
    if (start < 0 || len <= 0 || start + len > xv.shape[axis]) shape_error("narrow", xv, "slice out of range");
    std::vector<int> out_shape = xv.shape;
    out_shape[axis] = len;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xv.shape[i];
    for (int i = axis + 1; i < xv.ndim(); ++i) inner *= xv.shape[i];
    int64_t full = xv.shape[axis];
    Tensor out = Tensor::zeros(out_shape);
    for (int64_t o = 0; o < outer; ++o) {
        const double* src = xv.data.data() + (o * full + start) * inner;
        double* dst = out.data.data() + o * len * inner;
        std::copy(src, src + static_cast<int64_t>(len) * inner, dst);
    }
    return make_node(std::move(out), {x}, [x, start, len, outer, inner, full](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = self.grad.data.data() + o * len * inner;
            double* dst = x->grad.data.data() + (o * full + start) * inner;
            for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; ++i) dst[i] += src[i];
        }
    }, "narrow");
}

Var reshape(const Var& x, const std::vector<int>& shape) {
    if (shape_numel(shape) != x->value.numel()) {
        throw std::invalid_argument("reshape: cannot reshape " + shape_str(x->value.shape) + " to " +
                                    shape_str(shape));
    }
    Tensor out(shape, x->value.data);
    return make_node(std::move(out), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double* pg = self.grad.data.data();
        double* gx = x->grad.data.data();
        int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) gx[i] += pg[i];
    }, "reshape");
}

Var sum_all(const Var& x) {
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    return make_node(Tensor::scalar(acc), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        double g = self.grad.data[0];
        for (double& v : x->grad.data) v += g;
    }, "sum_all");
}

Var mean_all(const Var& x) {
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    double inv = 1.0 / static_cast<double>(x->value.numel());
    return make_node(Tensor::scalar(acc * inv), {x}, [x, inv](Node& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        double g = self.grad.data[0] * inv;
        for (double& v : x->grad.data) v += g;
    }, "mean_all");
}

Var detach(const Var& x) { return make_leaf(x->value, false); }

Var linear(const Var& x, const Var& w, const Var& b) {
    Var y = matmul(x, w);
    if (b) y = add(y, b);
    return y;
}

}  // namespace terragen
