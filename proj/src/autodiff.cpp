#include "evfi/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace evfi {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatCM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

bool any_requires(const std::vector<Var>& vs) {
    for (const auto& v : vs)
        if (v->requires_grad) return true;
    return false;
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->requires_grad = any_requires(n->inputs);
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

void accumulate(const Var& v, const Tensor& g) {
    if (!v->requires_grad) return;
    Tensor& dst = v->grad_buffer();
    const double* s = g.data();
    double* d = dst.data();
    for (size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

} // namespace

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

void backward(const Var& root) {
    if (root->value.size() != 1) throw Error("InvalidConfig", "backward root must be scalar");
    // iterative post-order topo sort; each node is pushed at most once, so a
    // node shared by several paths back-propagates exactly once
    std::vector<Node*> order;
    std::unordered_set<Node*> pushed;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    pushed.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx].get();
            ++idx;
            if (child->requires_grad && !pushed.count(child)) {
                pushed.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad_buffer().fill(0.0);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        accumulate(n.inputs[0], n.grad);
        accumulate(n.inputs[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        accumulate(n.inputs[0], n.grad);
        if (n.inputs[1]->requires_grad) {
            Tensor& g = n.inputs[1]->grad_buffer();
            for (size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor& g = n.inputs[0]->grad_buffer();
            const Tensor& bv = n.inputs[1]->value;
            for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (n.inputs[1]->requires_grad) {
            Tensor& g = n.inputs[1]->grad_buffer();
            const Tensor& av = n.inputs[0]->value;
            for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

Var affine(const Var& a, double k, double c) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] = k * out[i] + c;
    return make_op(std::move(out), {a}, [k](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += k * n.grad[i];
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i)
        if (out[i] < 0.0) out[i] *= slope;
    return make_op(std::move(out), {a}, [slope](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        const Tensor& x = n.inputs[0]->value;
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * (x[i] >= 0.0 ? 1.0 : slope);
    });
}

Var tanh_op(const Var& a) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        const Tensor& y = n.value;
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * (1.0 - y[i] * y[i]);
    });
}

Var sigmoid_op(const Var& a) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        const Tensor& y = n.value;
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * y[i] * (1.0 - y[i]);
    });
}

Var clamp01(const Var& a) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(1.0, std::max(0.0, out[i]));
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        const Tensor& x = n.inputs[0]->value;
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (x[i] >= 0.0 && x[i] <= 1.0) g[i] += n.grad[i];
    });
}

// ------------------------------------------------------------------ structure

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("EmptySliceList", "concat of zero tensors");
    int h = parts[0]->value.dim(1), w = parts[0]->value.dim(2), c = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 3 || p->value.dim(1) != h || p->value.dim(2) != w)
            throw Error("ShapeMismatch", "concat_channels spatial mismatch");
        c += p->value.dim(0);
    }
    Tensor out({c, h, w});
    size_t plane = static_cast<size_t>(h) * w, off = 0;
    for (const auto& p : parts) {
        size_t n = p->value.size();
        std::copy(p->value.data(), p->value.data() + n, out.data() + off);
        off += n;
    }
    (void)plane;
    return make_op(std::move(out), parts, [](Node& n) {
        size_t off = 0;
        for (auto& in : n.inputs) {
            size_t cnt = in->value.size();
            if (in->requires_grad) {
                Tensor& g = in->grad_buffer();
                for (size_t i = 0; i < cnt; ++i) g[i] += n.grad[off + i];
            }
            off += cnt;
        }
    });
}

Var slice_channels(const Var& a, int c0, int c1) {
    const Tensor& x = a->value;
    if (c0 < 0 || c1 > x.dim(0) || c0 >= c1)
        throw Error("ShapeMismatch", "slice_channels range out of bounds");
    int h = x.dim(1), w = x.dim(2);
    size_t plane = static_cast<size_t>(h) * w;
    Tensor out({c1 - c0, h, w});
    std::copy(x.data() + c0 * plane, x.data() + c1 * plane, out.data());
    return make_op(std::move(out), {a}, [c0, plane](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        double* dst = g.data() + static_cast<size_t>(c0) * plane;
        for (size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    });
}

Var pad_bottom_right(const Var& a, int new_h, int new_w) {
    const Tensor& x = a->value;
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (new_h < h || new_w < w) throw Error("ShapeMismatch", "pad target smaller than input");
    if (new_h == h && new_w == w) return a;
    Tensor out({c, new_h, new_w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            std::copy(&x.at(ci, y, 0), &x.at(ci, y, 0) + w, &out.at(ci, y, 0));
    return make_op(std::move(out), {a}, [c, h, w](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x2 = 0; x2 < w; ++x2) g.at(ci, y, x2) += n.grad.at(ci, y, x2);
    });
}

Var crop_top_left(const Var& a, int new_h, int new_w) {
    const Tensor& x = a->value;
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (new_h > h || new_w > w) throw Error("ShapeMismatch", "crop target larger than input");
    if (new_h == h && new_w == w) return a;
    Tensor out({c, new_h, new_w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < new_h; ++y)
            std::copy(&x.at(ci, y, 0), &x.at(ci, y, 0) + new_w, &out.at(ci, y, 0));
    return make_op(std::move(out), {a}, [c, new_h, new_w](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < new_h; ++y)
                for (int x2 = 0; x2 < new_w; ++x2) g.at(ci, y, x2) += n.grad.at(ci, y, x2);
    });
}

Var upsample2_nearest(const Var& a) {
    const Tensor& x = a->value;
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
            for (int x2 = 0; x2 < 2 * w; ++x2) out.at(ci, y, x2) = x.at(ci, y / 2, x2 / 2);
    return make_op(std::move(out), {a}, [c, h, w](Node& n) {
        Tensor& g = n.inputs[0]->grad_buffer();
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < 2 * h; ++y)
                for (int x2 = 0; x2 < 2 * w; ++x2) g.at(ci, y / 2, x2 / 2) += n.grad.at(ci, y, x2);
    });
}

Var broadcast_mul(const Var& w, const Var& x) {
    const Tensor& wv = w->value;
    const Tensor& xv = x->value;
    if (wv.rank() != 3 || wv.dim(0) != 1 || wv.dim(1) != xv.dim(1) || wv.dim(2) != xv.dim(2))
        throw Error("ShapeMismatch", "broadcast_mul expects (1,H,W) weight");
    Tensor out = xv;
    size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    for (int c = 0; c < xv.dim(0); ++c)
        for (size_t i = 0; i < plane; ++i) out[c * plane + i] *= wv[i];
    return make_op(std::move(out), {w, x}, [plane](Node& n) {
        const Tensor& wv = n.inputs[0]->value;
        const Tensor& xv = n.inputs[1]->value;
        int c = xv.dim(0);
        if (n.inputs[0]->requires_grad) {
            Tensor& g = n.inputs[0]->grad_buffer();
            for (int ci = 0; ci < c; ++ci)
                for (size_t i = 0; i < plane; ++i) g[i] += n.grad[ci * plane + i] * xv[ci * plane + i];
        }
        if (n.inputs[1]->requires_grad) {
            Tensor& g = n.inputs[1]->grad_buffer();
            for (int ci = 0; ci < c; ++ci)
                for (size_t i = 0; i < plane; ++i) g[ci * plane + i] += n.grad[ci * plane + i] * wv[i];
        }
    });
}

// --------------------------------------------------------------------- conv2d

namespace kernels {

namespace {

// col (Ci*kh*kw, Ho*Wo) column-major: one column per output pixel
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int ho, int wo, MatCM& col) {
    int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    col.resize(static_cast<Eigen::Index>(ci) * kh * kw, static_cast<Eigen::Index>(ho) * wo);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            double* dst = col.col(static_cast<Eigen::Index>(oy) * wo + ox).data();
            int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
            for (int c = 0; c < ci; ++c) {
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = iy0 + ky;
                    for (int kx = 0; kx < kw; ++kx, ++dst) {
                        int ix = ix0 + kx;
                        *dst = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x.at(c, iy, ix) : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const MatCM& col, int ci, int h, int w, int kh, int kw, int stride, int pad, int ho,
            int wo, Tensor& dx) {
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            const double* src = col.col(static_cast<Eigen::Index>(oy) * wo + ox).data();
            int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
            for (int c = 0; c < ci; ++c) {
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = iy0 + ky;
                    for (int kx = 0; kx < kw; ++kx, ++src) {
                        int ix = ix0 + kx;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) dx.at(c, iy, ix) += *src;
                    }
                }
            }
        }
    }
}

} // namespace

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                    Tensor& out) {
    int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != ci) throw Error("ShapeMismatch", "conv2d weight/input channels");
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (wd + 2 * pad - kw) / stride + 1;
    out = Tensor({co, ho, wo});
    thread_local MatCM col;
    im2col(x, kh, kw, stride, pad, ho, wo, col);
    CMapRM wm(w.data(), co, static_cast<Eigen::Index>(ci) * kh * kw);
    MapRM om(out.data(), co, static_cast<Eigen::Index>(ho) * wo);
    om.noalias() = wm * col;
    for (int c = 0; c < co; ++c) om.row(c).array() += b[static_cast<size_t>(c)];
}

void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dout,
                     Tensor* dx, Tensor* dw, Tensor* db) {
    int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    int ho = dout.dim(1), wo = dout.dim(2);
    CMapRM dom(dout.data(), co, static_cast<Eigen::Index>(ho) * wo);
    if (dw || dx) {
        thread_local MatCM col;
        if (dw) {
            im2col(x, kh, kw, stride, pad, ho, wo, col);
            MapRM dwm(dw->data(), co, static_cast<Eigen::Index>(ci) * kh * kw);
            dwm.noalias() += dom * col.transpose();
        }
        if (dx) {
            CMapRM wm(w.data(), co, static_cast<Eigen::Index>(ci) * kh * kw);
            MatCM dcol = wm.transpose() * dom;
            col2im(dcol, ci, h, wd, kh, kw, stride, pad, ho, wo, *dx);
        }
    }
    if (db)
        for (int c = 0; c < co; ++c) (*db)[static_cast<size_t>(c)] += dom.row(c).sum();
}

} // namespace kernels

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    Tensor out;
    kernels::conv2d_forward(x->value, w->value, b->value, stride, pad, out);
    return make_op(std::move(out), {x, w, b}, [stride, pad](Node& n) {
        const Tensor& xv = n.inputs[0]->value;
        const Tensor& wv = n.inputs[1]->value;
        Tensor* dx = n.inputs[0]->requires_grad ? &n.inputs[0]->grad_buffer() : nullptr;
        Tensor* dw = n.inputs[1]->requires_grad ? &n.inputs[1]->grad_buffer() : nullptr;
        Tensor* db = n.inputs[2]->requires_grad ? &n.inputs[2]->grad_buffer() : nullptr;
        kernels::conv2d_backward(xv, wv, stride, pad, n.grad, dx, dw, db);
    });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x->value;
    int c = xv.dim(0);
    size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    std::vector<double> mean(c), istd(c);
    Tensor out = xv;
    for (int ci = 0; ci < c; ++ci) {
        const double* p = xv.data() + ci * plane;
        double m = 0;
        for (size_t i = 0; i < plane; ++i) m += p[i];
        m /= static_cast<double>(plane);
        double v = 0;
        for (size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
        v /= static_cast<double>(plane);
        mean[ci] = m;
        istd[ci] = 1.0 / std::sqrt(v + eps);
        double g = gamma->value[static_cast<size_t>(ci)], bt = beta->value[static_cast<size_t>(ci)];
        double* o = out.data() + ci * plane;
        for (size_t i = 0; i < plane; ++i) o[i] = g * (p[i] - m) * istd[ci] + bt;
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [mean = std::move(mean), istd = std::move(istd), plane](Node& n) {
                       const Tensor& xv = n.inputs[0]->value;
                       int c = xv.dim(0);
                       const double np = static_cast<double>(plane);
                       for (int ci = 0; ci < c; ++ci) {
                           const double* p = xv.data() + ci * plane;
                           const double* gy = n.grad.data() + ci * plane;
                           double g = n.inputs[1]->value[static_cast<size_t>(ci)];
                           double sum_gy = 0, sum_gy_xhat = 0;
                           for (size_t i = 0; i < plane; ++i) {
                               double xhat = (p[i] - mean[ci]) * istd[ci];
                               sum_gy += gy[i];
                               sum_gy_xhat += gy[i] * xhat;
                           }
                           if (n.inputs[1]->requires_grad)
                               n.inputs[1]->grad_buffer()[static_cast<size_t>(ci)] += sum_gy_xhat;
                           if (n.inputs[2]->requires_grad)
                               n.inputs[2]->grad_buffer()[static_cast<size_t>(ci)] += sum_gy;
                           if (n.inputs[0]->requires_grad) {
                               Tensor& dx = n.inputs[0]->grad_buffer();
                               double* d = dx.data() + ci * plane;
                               for (size_t i = 0; i < plane; ++i) {
                                   double xhat = (p[i] - mean[ci]) * istd[ci];
                                   d[i] += g * istd[ci] *
                                           (gy[i] - sum_gy / np - xhat * sum_gy_xhat / np);
                               }
                           }
                       }
                   });
}

// ----------------------------------------------------------------------- warp

namespace kernels {

void warp_forward(const Tensor& src, const Tensor& flow, Tensor& out, Tensor* mask) {
    int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    if (flow.dim(0) != 2 || flow.dim(1) != h || flow.dim(2) != w)
        throw Error("ShapeMismatch", "warp flow must be (2,H,W) matching source");
    out = Tensor({c, h, w});
    if (mask) *mask = Tensor({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sx = x + flow.at(0, y, x);
            double sy = y + flow.at(1, y, x);
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            bool inside = !(x0 > w - 1 || x0 + 1 < 0 || y0 > h - 1 || y0 + 1 < 0);
            if (mask) mask->at(y, x) = inside ? 1.0 : 0.0;
            if (!inside) continue;
            double fx = sx - x0, fy = sy - y0;
            bool l = x0 >= 0, r = x0 + 1 <= w - 1, t = y0 >= 0, b = y0 + 1 <= h - 1;
            for (int ci = 0; ci < c; ++ci) {
                double v00 = (l && t) ? src.at(ci, y0, x0) : 0.0;
                double v01 = (r && t) ? src.at(ci, y0, x0 + 1) : 0.0;
                double v10 = (l && b) ? src.at(ci, y0 + 1, x0) : 0.0;
                double v11 = (r && b) ? src.at(ci, y0 + 1, x0 + 1) : 0.0;
                out.at(ci, y, x) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                   fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }
}

void warp_backward(const Tensor& src, const Tensor& flow, const Tensor& dout, Tensor* dsrc,
                   Tensor* dflow) {
    int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sx = x + flow.at(0, y, x);
            double sy = y + flow.at(1, y, x);
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            if (x0 > w - 1 || x0 + 1 < 0 || y0 > h - 1 || y0 + 1 < 0) continue;
            double fx = sx - x0, fy = sy - y0;
            bool l = x0 >= 0, r = x0 + 1 <= w - 1, t = y0 >= 0, b = y0 + 1 <= h - 1;
            double gx = 0, gy = 0;
            for (int ci = 0; ci < c; ++ci) {
                double g = dout.at(ci, y, x);
                if (g == 0.0 && !dflow) continue;
                double v00 = (l && t) ? src.at(ci, y0, x0) : 0.0;
                double v01 = (r && t) ? src.at(ci, y0, x0 + 1) : 0.0;
                double v10 = (l && b) ? src.at(ci, y0 + 1, x0) : 0.0;
                double v11 = (r && b) ? src.at(ci, y0 + 1, x0 + 1) : 0.0;
                if (dsrc) {
                    if (l && t) dsrc->at(ci, y0, x0) += g * (1 - fy) * (1 - fx);
                    if (r && t) dsrc->at(ci, y0, x0 + 1) += g * (1 - fy) * fx;
                    if (l && b) dsrc->at(ci, y0 + 1, x0) += g * fy * (1 - fx);
                    if (r && b) dsrc->at(ci, y0 + 1, x0 + 1) += g * fy * fx;
                }
                gx += g * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                gy += g * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
            }
            if (dflow) {
                dflow->at(0, y, x) += gx;
                dflow->at(1, y, x) += gy;
            }
        }
    }
}

} // namespace kernels

Var warp_bilinear(const Var& src, const Var& flow, Tensor* mask) {
    Tensor out;
    kernels::warp_forward(src->value, flow->value, out, mask);
    return make_op(std::move(out), {src, flow}, [](Node& n) {
        Tensor* dsrc = n.inputs[0]->requires_grad ? &n.inputs[0]->grad_buffer() : nullptr;
        Tensor* dflow = n.inputs[1]->requires_grad ? &n.inputs[1]->grad_buffer() : nullptr;
        kernels::warp_backward(n.inputs[0]->value, n.inputs[1]->value, n.grad, dsrc, dflow);
    });
}

// ----------------------------------------------------------------- reductions

Var mean_abs_diff(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mean_abs_diff");
    double s = 0;
    size_t n = a->value.size();
    for (size_t i = 0; i < n; ++i) s += std::abs(a->value[i] - b->value[i]);
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    return make_op(std::move(out), {a, b}, [n](Node& nd) {
        double g = nd.grad[0] / static_cast<double>(n);
        const Tensor& av = nd.inputs[0]->value;
        const Tensor& bv = nd.inputs[1]->value;
        for (int side = 0; side < 2; ++side) {
            if (!nd.inputs[side]->requires_grad) continue;
            Tensor& dst = nd.inputs[side]->grad_buffer();
            double sgn = side == 0 ? 1.0 : -1.0;
            for (size_t i = 0; i < n; ++i) {
                double d = av[i] - bv[i];
                double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                dst[i] += sgn * g * s;
            }
        }
    });
}

Var mean_sq_diff(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mean_sq_diff");
    double s = 0;
    size_t n = a->value.size();
    for (size_t i = 0; i < n; ++i) {
        double d = a->value[i] - b->value[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    return make_op(std::move(out), {a, b}, [n](Node& nd) {
        double g = 2.0 * nd.grad[0] / static_cast<double>(n);
        const Tensor& av = nd.inputs[0]->value;
        const Tensor& bv = nd.inputs[1]->value;
        for (int side = 0; side < 2; ++side) {
            if (!nd.inputs[side]->requires_grad) continue;
            Tensor& dst = nd.inputs[side]->grad_buffer();
            double sgn = side == 0 ? 1.0 : -1.0;
            for (size_t i = 0; i < n; ++i) dst[i] += sgn * g * (av[i] - bv[i]);
        }
    });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
    if (terms.size() != weights.size() || terms.empty())
        throw Error("InvalidConfig", "weighted_sum terms/weights mismatch");
    double s = 0;
    for (size_t i = 0; i < terms.size(); ++i) {
        if (terms[i]->value.size() != 1) throw Error("ShapeMismatch", "weighted_sum needs scalars");
        s += weights[i] * terms[i]->value[0];
    }
    return make_op(Tensor::scalar(s), terms, [weights](Node& n) {
        for (size_t i = 0; i < n.inputs.size(); ++i)
            if (n.inputs[i]->requires_grad) n.inputs[i]->grad_buffer()[0] += weights[i] * n.grad[0];
    });
}

} // namespace evfi
