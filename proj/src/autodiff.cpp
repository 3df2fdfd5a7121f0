#include "semimatch/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace semimatch {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> inputs, const char* op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->op = op;
    for (const auto& in : n->inputs) {
        if (in->requires_grad) n->requires_grad = true;
    }
    return n;
}

void accumulate(Node& dst, const Tensor& delta) {
    dst.ensure_grad();
    real* g = dst.grad.data();
    const real* d = delta.data();
    const std::int64_t n = delta.size();
    for (std::int64_t i = 0; i < n; ++i) g[i] += d[i];
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch, " + a.shape_str() + " vs " +
                                b.shape_str());
}

}  // namespace

Var Var::detach() const { return leaf(node_->value, false); }

Var leaf(Tensor value, bool requires_grad) {
    auto n = make_node(std::move(value), {}, "leaf");
    n->requires_grad = requires_grad;
    return Var(n);
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

namespace {

template <typename Fwd, typename Bwd>
Var binary_elementwise(const Var& a, const Var& b, const char* op, Fwd fwd, Bwd bwd) {
    if (!a.value().same_shape(b.value())) shape_error(op, a.value(), b.value());
    Tensor out(a.value().shape());
    const real* pa = a.value().data();
    const real* pb = b.value().data();
    real* po = out.data();
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
    auto node = make_node(std::move(out), {a.node(), b.node()}, op);
    if (node->requires_grad) {
        node->backprop = [bwd](Node& self) {
            Node& na = *self.inputs[0];
            Node& nb = *self.inputs[1];
            const std::int64_t n = self.value.size();
            const real* g = self.grad.data();
            const real* pa = na.value.data();
            const real* pb = nb.value.data();
            if (na.requires_grad) {
                na.ensure_grad();
                real* ga = na.grad.data();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += bwd(g[i], pa[i], pb[i], true);
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                real* gb = nb.grad.data();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += bwd(g[i], pa[i], pb[i], false);
            }
        };
    }
    return Var(node);
}

template <typename Fwd, typename Bwd>
Var unary_elementwise(const Var& a, const char* op, Fwd fwd, Bwd bwd) {
    Tensor out(a.value().shape());
    const real* pa = a.value().data();
    real* po = out.data();
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    auto node = make_node(std::move(out), {a.node()}, op);
    if (node->requires_grad) {
        node->backprop = [bwd](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            const std::int64_t n = self.value.size();
            const real* g = self.grad.data();
            const real* pa = na.value.data();
            const real* py = self.value.data();
            real* ga = na.grad.data();
            for (std::int64_t i = 0; i < n; ++i) ga[i] += bwd(g[i], pa[i], py[i]);
        };
    }
    return Var(node);
}

}  // namespace

Var add(const Var& a, const Var& b) {
    return binary_elementwise(
        a, b, "add", [](real x, real y) { return x + y; },
        [](real g, real, real, bool) { return g; });
}

Var sub(const Var& a, const Var& b) {
    return binary_elementwise(
        a, b, "sub", [](real x, real y) { return x - y; },
        [](real g, real, real, bool left) { return left ? g : -g; });
}

Var mul(const Var& a, const Var& b) {
    return binary_elementwise(
        a, b, "mul", [](real x, real y) { return x * y; },
        [](real g, real x, real y, bool left) { return left ? g * y : g * x; });
}

Var div(const Var& a, const Var& b) {
    return binary_elementwise(
        a, b, "div", [](real x, real y) { return x / y; },
        [](real g, real x, real y, bool left) { return left ? g / y : -g * x / (y * y); });
}

Var scale(const Var& a, real c) {
    return unary_elementwise(
        a, "scale", [c](real x) { return c * x; }, [c](real g, real, real) { return c * g; });
}

Var add_scalar(const Var& a, real c) {
    return unary_elementwise(
        a, "add_scalar", [c](real x) { return x + c; }, [](real g, real, real) { return g; });
}

Var exp_(const Var& a) {
    return unary_elementwise(
        a, "exp", [](real x) { return std::exp(x); }, [](real g, real, real y) { return g * y; });
}

Var log_(const Var& a) {
    return unary_elementwise(
        a, "log", [](real x) { return std::log(x); }, [](real g, real x, real) { return g / x; });
}

Var sqrt_(const Var& a) {
    // Subgradient 0 at the origin keeps losses that hit an exact zero finite.
    return unary_elementwise(
        a, "sqrt", [](real x) { return std::sqrt(x); },
        [](real g, real, real y) { return y > real(0) ? g / (real(2) * y) : real(0); });
}

Var relu(const Var& a) {
    return unary_elementwise(
        a, "relu", [](real x) { return x > real(0) ? x : real(0); },
        [](real g, real x, real) { return x > real(0) ? g : real(0); });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a.value().reshaped(shape);
    auto node = make_node(std::move(out), {a.node()}, "reshape");
    if (node->requires_grad) {
        node->backprop = [](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            const real* g = self.grad.data();
            real* ga = na.grad.data();
            const std::int64_t n = self.value.size();
            for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i];
        };
    }
    return Var(node);
}

Var transpose2d(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 2) throw std::invalid_argument("transpose2d: expected rank-2, got " + x.shape_str());
    const int m = x.extent(0), n = x.extent(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = x.at(i, j);
    auto node = make_node(std::move(out), {a.node()}, "transpose2d");
    if (node->requires_grad) {
        node->backprop = [m, n](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) na.grad.at(i, j) += self.grad.at(j, i);
        };
    }
    return Var(node);
}

Var matmul(const Var& a, const Var& b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rank() != 2 || y.rank() != 2 || x.extent(1) != y.extent(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + x.shape_str() + " x " +
                                    y.shape_str());
    }
    const int m = x.extent(0), k = x.extent(1), n = y.extent(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        const real* xr = x.data() + static_cast<std::size_t>(i) * k;
        real* or_ = out.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const real xv = xr[p];
            const real* yr = y.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) or_[j] += xv * yr[j];
        }
    }
    auto node = make_node(std::move(out), {a.node(), b.node()}, "matmul");
    if (node->requires_grad) {
        node->backprop = [m, k, n](Node& self) {
            Node& na = *self.inputs[0];
            Node& nb = *self.inputs[1];
            const Tensor& g = self.grad;
            if (na.requires_grad) {
                na.ensure_grad();  // dA = G * B^T
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        real acc = 0;
                        const real* gr = g.data() + static_cast<std::size_t>(i) * n;
                        const real* br = nb.value.data() + static_cast<std::size_t>(p) * n;
                        for (int j = 0; j < n; ++j) acc += gr[j] * br[j];
                        na.grad.at(i, p) += acc;
                    }
            }
            if (nb.requires_grad) {
                nb.ensure_grad();  // dB = A^T * G
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        const real xv = na.value.at(i, p);
                        const real* gr = g.data() + static_cast<std::size_t>(i) * n;
                        real* br = nb.grad.data() + static_cast<std::size_t>(p) * n;
                        for (int j = 0; j < n; ++j) br[j] += xv * gr[j];
                    }
            }
        };
    }
    return Var(node);
}

namespace {

struct ConvDims {
    int batch, ci, h, w, co, kh, kw, oh, ow, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 4 || w.rank() != 4) {
        throw std::invalid_argument("conv2d: expected rank-4 input and weight, got " +
                                    x.shape_str() + " and " + w.shape_str());
    }
    if (x.extent(1) != w.extent(1)) {
        throw std::invalid_argument("conv2d: channel mismatch, input " + x.shape_str() +
                                    " vs weight " + w.shape_str());
    }
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    ConvDims d;
    d.batch = x.extent(0);
    d.ci = x.extent(1);
    d.h = x.extent(2);
    d.w = x.extent(3);
    d.co = w.extent(0);
    d.kh = w.extent(2);
    d.kw = w.extent(3);
    d.stride = stride;
    d.pad = pad;
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0) {
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    }
    return d;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    const ConvDims d = conv_dims(x.value(), w.value(), stride, pad);
    if (bias.defined() && bias.value().size() != d.co) {
        throw std::invalid_argument("conv2d: bias length " + bias.value().shape_str() +
                                    " does not match output channels " + std::to_string(d.co));
    }
    Tensor out({d.batch, d.co, d.oh, d.ow});
    const real* px = x.value().data();
    const real* pw = w.value().data();
    real* po = out.data();
    const std::int64_t x_n = static_cast<std::int64_t>(d.ci) * d.h * d.w;
    const std::int64_t o_n = static_cast<std::int64_t>(d.co) * d.oh * d.ow;
    for (int n = 0; n < d.batch; ++n) {
        for (int co = 0; co < d.co; ++co) {
            real* oplane = po + n * o_n + static_cast<std::int64_t>(co) * d.oh * d.ow;
            const real b = bias.defined() ? bias.value()[co] : real(0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.oh) * d.ow; ++i) oplane[i] = b;
            for (int ci = 0; ci < d.ci; ++ci) {
                const real* xplane = px + n * x_n + static_cast<std::int64_t>(ci) * d.h * d.w;
                for (int kh = 0; kh < d.kh; ++kh) {
                    for (int kw = 0; kw < d.kw; ++kw) {
                        const real wv = pw[((static_cast<std::int64_t>(co) * d.ci + ci) * d.kh + kh) * d.kw + kw];
                        if (wv == real(0)) continue;
                        for (int oh = 0; oh < d.oh; ++oh) {
                            const int ih = oh * d.stride - d.pad + kh;
                            if (ih < 0 || ih >= d.h) continue;
                            const real* xrow = xplane + static_cast<std::int64_t>(ih) * d.w;
                            real* orow = oplane + static_cast<std::int64_t>(oh) * d.ow;
                            for (int ow = 0; ow < d.ow; ++ow) {
                                const int iw = ow * d.stride - d.pad + kw;
                                if (iw < 0 || iw >= d.w) continue;
                                orow[ow] += wv * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    std::vector<NodePtr> ins = {x.node(), w.node()};
    if (bias.defined()) ins.push_back(bias.node());
    auto node = make_node(std::move(out), std::move(ins), "conv2d");
    if (node->requires_grad) {
        const bool has_bias = bias.defined();
        node->backprop = [d, has_bias](Node& self) {
            Node& nx = *self.inputs[0];
            Node& nw = *self.inputs[1];
            const Tensor& g = self.grad;
            const std::int64_t x_n = static_cast<std::int64_t>(d.ci) * d.h * d.w;
            const std::int64_t o_n = static_cast<std::int64_t>(d.co) * d.oh * d.ow;
            if (has_bias && self.inputs[2]->requires_grad) {
                Node& nb = *self.inputs[2];
                nb.ensure_grad();
                for (int n = 0; n < d.batch; ++n)
                    for (int co = 0; co < d.co; ++co) {
                        const real* gplane = g.data() + n * o_n + static_cast<std::int64_t>(co) * d.oh * d.ow;
                        real acc = 0;
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.oh) * d.ow; ++i)
                            acc += gplane[i];
                        nb.grad[co] += acc;
                    }
            }
            if (nw.requires_grad) {
                nw.ensure_grad();
                for (int n = 0; n < d.batch; ++n)
                    for (int co = 0; co < d.co; ++co) {
                        const real* gplane =
                            g.data() + n * o_n + static_cast<std::int64_t>(co) * d.oh * d.ow;
                        for (int ci = 0; ci < d.ci; ++ci) {
                            const real* xplane =
                                nx.value.data() + n * x_n + static_cast<std::int64_t>(ci) * d.h * d.w;
                            for (int kh = 0; kh < d.kh; ++kh)
                                for (int kw = 0; kw < d.kw; ++kw) {
                                    real acc = 0;
                                    for (int oh = 0; oh < d.oh; ++oh) {
                                        const int ih = oh * d.stride - d.pad + kh;
                                        if (ih < 0 || ih >= d.h) continue;
                                        const real* xrow = xplane + static_cast<std::int64_t>(ih) * d.w;
                                        const real* grow = gplane + static_cast<std::int64_t>(oh) * d.ow;
                                        for (int ow = 0; ow < d.ow; ++ow) {
                                            const int iw = ow * d.stride - d.pad + kw;
                                            if (iw < 0 || iw >= d.w) continue;
                                            acc += xrow[iw] * grow[ow];
                                        }
                                    }
                                    nw.grad[((static_cast<std::int64_t>(co) * d.ci + ci) * d.kh + kh) * d.kw +
                                            kw] += acc;
                                }
                        }
                    }
            }
            if (nx.requires_grad) {
                nx.ensure_grad();
                for (int n = 0; n < d.batch; ++n)
                    for (int co = 0; co < d.co; ++co) {
                        const real* gplane =
                            g.data() + n * o_n + static_cast<std::int64_t>(co) * d.oh * d.ow;
                        for (int ci = 0; ci < d.ci; ++ci) {
                            real* xgplane =
                                nx.grad.data() + n * x_n + static_cast<std::int64_t>(ci) * d.h * d.w;
                            for (int kh = 0; kh < d.kh; ++kh)
                                for (int kw = 0; kw < d.kw; ++kw) {
                                    const real wv =
                                        nw.value[((static_cast<std::int64_t>(co) * d.ci + ci) * d.kh + kh) *
                                                     d.kw +
                                                 kw];
                                    if (wv == real(0)) continue;
                                    for (int oh = 0; oh < d.oh; ++oh) {
                                        const int ih = oh * d.stride - d.pad + kh;
                                        if (ih < 0 || ih >= d.h) continue;
                                        real* xrow = xgplane + static_cast<std::int64_t>(ih) * d.w;
                                        const real* grow = gplane + static_cast<std::int64_t>(oh) * d.ow;
                                        for (int ow = 0; ow < d.ow; ++ow) {
                                            const int iw = ow * d.stride - d.pad + kw;
                                            if (iw < 0 || iw >= d.w) continue;
                                            xrow[iw] += wv * grow[ow];
                                        }
                                    }
                                }
                        }
                    }
            }
        };
    }
    return Var(node);
}

namespace {

struct RowDims {
    std::int64_t rows;
    int cols;
};

RowDims row_dims(const Tensor& t, const char* op) {
    if (t.rank() < 1) throw std::invalid_argument(std::string(op) + ": rank-0 input");
    const int cols = t.extent(t.rank() - 1);
    if (cols <= 0) throw std::invalid_argument(std::string(op) + ": empty last axis");
    return {t.size() / cols, cols};
}

}  // namespace

Var softmax_lastdim(const Var& a) {
    const RowDims rd = row_dims(a.value(), "softmax");
    Tensor out(a.value().shape());
    const real* px = a.value().data();
    real* po = out.data();
    for (std::int64_t r = 0; r < rd.rows; ++r) {
        const real* xr = px + r * rd.cols;
        real* yr = po + r * rd.cols;
        real mx = xr[0];
        for (int j = 1; j < rd.cols; ++j) mx = std::max(mx, xr[j]);
        real sum = 0;
        for (int j = 0; j < rd.cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        const real inv = real(1) / sum;
        for (int j = 0; j < rd.cols; ++j) yr[j] *= inv;
    }
    auto node = make_node(std::move(out), {a.node()}, "softmax");
    if (node->requires_grad) {
        node->backprop = [rd](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (std::int64_t r = 0; r < rd.rows; ++r) {
                const real* y = self.value.data() + r * rd.cols;
                const real* g = self.grad.data() + r * rd.cols;
                real* gx = na.grad.data() + r * rd.cols;
                real dot = 0;
                for (int j = 0; j < rd.cols; ++j) dot += g[j] * y[j];
                for (int j = 0; j < rd.cols; ++j) gx[j] += y[j] * (g[j] - dot);
            }
        };
    }
    return Var(node);
}

Var log_softmax_lastdim(const Var& a) {
    const RowDims rd = row_dims(a.value(), "log_softmax");
    Tensor out(a.value().shape());
    const real* px = a.value().data();
    real* po = out.data();
    for (std::int64_t r = 0; r < rd.rows; ++r) {
        const real* xr = px + r * rd.cols;
        real* yr = po + r * rd.cols;
        real mx = xr[0];
        for (int j = 1; j < rd.cols; ++j) mx = std::max(mx, xr[j]);
        real sum = 0;
        for (int j = 0; j < rd.cols; ++j) sum += std::exp(xr[j] - mx);
        const real lse = mx + std::log(sum);
        for (int j = 0; j < rd.cols; ++j) yr[j] = xr[j] - lse;
    }
    auto node = make_node(std::move(out), {a.node()}, "log_softmax");
    if (node->requires_grad) {
        node->backprop = [rd](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (std::int64_t r = 0; r < rd.rows; ++r) {
                const real* y = self.value.data() + r * rd.cols;
                const real* g = self.grad.data() + r * rd.cols;
                real* gx = na.grad.data() + r * rd.cols;
                real gsum = 0;
                for (int j = 0; j < rd.cols; ++j) gsum += g[j];
                for (int j = 0; j < rd.cols; ++j) gx[j] += g[j] - std::exp(y[j]) * gsum;
            }
        };
    }
    return Var(node);
}

Var sum_lastdim(const Var& a) {
    const RowDims rd = row_dims(a.value(), "sum_lastdim");
    std::vector<int> out_shape(a.value().shape().begin(), a.value().shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    Tensor out(out_shape);
    const real* px = a.value().data();
    for (std::int64_t r = 0; r < rd.rows; ++r) {
        real acc = 0;
        for (int j = 0; j < rd.cols; ++j) acc += px[r * rd.cols + j];
        out[r] = acc;
    }
    auto node = make_node(std::move(out), {a.node()}, "sum_lastdim");
    if (node->requires_grad) {
        node->backprop = [rd](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (std::int64_t r = 0; r < rd.rows; ++r) {
                const real g = self.grad[r];
                real* gx = na.grad.data() + r * rd.cols;
                for (int j = 0; j < rd.cols; ++j) gx[j] += g;
            }
        };
    }
    return Var(node);
}

Var sum_all(const Var& a) {
    real acc = 0;
    const real* px = a.value().data();
    const std::int64_t n = a.value().size();
    for (std::int64_t i = 0; i < n; ++i) acc += px[i];
    auto node = make_node(Tensor::scalar(acc), {a.node()}, "sum_all");
    if (node->requires_grad) {
        node->backprop = [](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            const real g = self.grad[0];
            real* gx = na.grad.data();
            const std::int64_t n = na.value.size();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
        };
    }
    return Var(node);
}

Var l2_normalize_columns(const Var& a, real eps) {
    const Tensor& x = a.value();
    if (x.rank() != 2) {
        throw std::invalid_argument("l2_normalize_columns: expected rank-2, got " + x.shape_str());
    }
    const int c = x.extent(0), n = x.extent(1);
    Tensor out({c, n});
    std::vector<real> inv_norm(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        real ss = eps;
        for (int i = 0; i < c; ++i) ss += x.at(i, j) * x.at(i, j);
        inv_norm[j] = real(1) / std::sqrt(ss);
    }
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) * inv_norm[j];
    auto node = make_node(std::move(out), {a.node()}, "l2_normalize_columns");
    if (node->requires_grad) {
        node->backprop = [c, n, inv_norm](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (int j = 0; j < n; ++j) {
                const real r = inv_norm[j];
                real dot = 0;  // x . g per column
                for (int i = 0; i < c; ++i) dot += na.value.at(i, j) * self.grad.at(i, j);
                for (int i = 0; i < c; ++i) {
                    na.grad.at(i, j) +=
                        self.grad.at(i, j) * r - na.value.at(i, j) * dot * r * r * r;
                }
            }
        };
    }
    return Var(node);
}

Var gather_rows(const Var& a, std::vector<int> rows) {
    const Tensor& x = a.value();
    if (x.rank() != 2) throw std::invalid_argument("gather_rows: expected rank-2, got " + x.shape_str());
    const int m = x.extent(0), n = x.extent(1);
    Tensor out({static_cast<int>(rows.size()), n});
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= m) {
            throw std::invalid_argument("gather_rows: row index " + std::to_string(rows[k]) +
                                        " out of range [0," + std::to_string(m) + ")");
        }
        for (int j = 0; j < n; ++j) out.at(static_cast<int>(k), j) = x.at(rows[k], j);
    }
    auto node = make_node(std::move(out), {a.node()}, "gather_rows");
    if (node->requires_grad) {
        node->backprop = [rows, n](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (std::size_t k = 0; k < rows.size(); ++k)
                for (int j = 0; j < n; ++j)
                    na.grad.at(rows[k], j) += self.grad.at(static_cast<int>(k), j);
        };
    }
    return Var(node);
}

Var pick_per_row(const Var& a, std::vector<int> cols) {
    const Tensor& x = a.value();
    if (x.rank() != 2) throw std::invalid_argument("pick_per_row: expected rank-2, got " + x.shape_str());
    const int m = x.extent(0), n = x.extent(1);
    if (static_cast<int>(cols.size()) != m) {
        throw std::invalid_argument("pick_per_row: index count " + std::to_string(cols.size()) +
                                    " does not match row count " + std::to_string(m));
    }
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        if (cols[i] >= n) {
            throw std::invalid_argument("pick_per_row: column index " + std::to_string(cols[i]) +
                                        " out of range [0," + std::to_string(n) + ")");
        }
        out[i] = cols[i] < 0 ? real(0) : x.at(i, cols[i]);
    }
    auto node = make_node(std::move(out), {a.node()}, "pick_per_row");
    if (node->requires_grad) {
        node->backprop = [cols](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (std::size_t i = 0; i < cols.size(); ++i)
                if (cols[i] >= 0) na.grad.at(static_cast<int>(i), cols[i]) += self.grad[static_cast<std::int64_t>(i)];
        };
    }
    return Var(node);
}

Var grid_sample_op(const Var& img, const Tensor& coords, const Tensor& valid) {
    const Tensor& x = img.value();
    if (x.rank() != 3) throw std::invalid_argument("grid_sample: expected [C,H,W] image, got " + x.shape_str());
    if (coords.rank() != 3 || coords.extent(0) != 2) {
        throw std::invalid_argument("grid_sample: expected [2,Ho,Wo] coords, got " + coords.shape_str());
    }
    const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
    const int oh = coords.extent(1), ow = coords.extent(2);
    require_shape(valid, {oh, ow}, "grid_sample validity");
    Tensor out({c, oh, ow});
    for (int yo = 0; yo < oh; ++yo) {
        for (int xo = 0; xo < ow; ++xo) {
            if (valid.at(yo, xo) == real(0)) continue;
            const real sx = coords.at(0, yo, xo);
            const real sy = coords.at(1, yo, xo);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const real fx = sx - x0, fy = sy - y0;
            const real wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int k = 0; k < 4; ++k) {
                if (xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h || wgt[k] == real(0)) continue;
                for (int ch = 0; ch < c; ++ch)
                    out.at(ch, yo, xo) += wgt[k] * x.at(ch, ys[k], xs[k]);
            }
        }
    }
    auto node = make_node(std::move(out), {img.node()}, "grid_sample");
    if (node->requires_grad) {
        node->backprop = [coords, valid, c, h, w, oh, ow](Node& self) {
            Node& na = *self.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (int yo = 0; yo < oh; ++yo)
                for (int xo = 0; xo < ow; ++xo) {
                    if (valid.at(yo, xo) == real(0)) continue;
                    const real sx = coords.at(0, yo, xo);
                    const real sy = coords.at(1, yo, xo);
                    const int x0 = static_cast<int>(std::floor(sx));
                    const int y0 = static_cast<int>(std::floor(sy));
                    const real fx = sx - x0, fy = sy - y0;
                    const real wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
                    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
                    for (int k = 0; k < 4; ++k) {
                        if (xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h || wgt[k] == real(0))
                            continue;
                        for (int ch = 0; ch < c; ++ch)
                            na.grad.at(ch, ys[k], xs[k]) += wgt[k] * self.grad.at(ch, yo, xo);
                    }
                }
        };
    }
    return Var(node);
}

void backward(const Var& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
    if (loss.value().size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss.value().shape_str());
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS; each node enters the order exactly once.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->inputs.size()) {
            Node* child = top.first->inputs[top.second].get();
            ++top.second;
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(top.first);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        n->ensure_grad();
        std::fill(n->grad.values().begin(), n->grad.values().end(), real(0));
    }
    loss.node()->grad[0] = real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace semimatch
