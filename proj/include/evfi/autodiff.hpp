#ifndef EVFI_AUTODIFF_HPP
#define EVFI_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "evfi/tensor.hpp"

namespace evfi {

// Reverse-mode tape over dense double tensors. Graphs are built dynamically
// per forward pass; leaves (parameters, inputs) outlive the graph.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad; // allocated on first accumulation
    bool requires_grad = false;
    std::vector<Var> inputs;
    std::function<void(Node&)> backprop; // scatter this->grad into inputs

    Tensor& grad_buffer() {
        if (grad.size() != value.size()) grad = Tensor::zeros(value.shape());
        return grad;
    }
    bool has_grad() const { return grad.size() == value.size(); }
};

Var leaf(Tensor value, bool requires_grad);
Var constant(Tensor value);

// Accumulates d(root)/d(leaf) into every reachable leaf with requires_grad.
// root must be scalar (size 1).
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& a, double k, double c); // k*a + c
Var leaky_relu(const Var& a, double slope = 0.1);
Var tanh_op(const Var& a);
Var sigmoid_op(const Var& a);
Var clamp01(const Var& a); // gradient passes where 0 <= x <= 1

// ---- structure ----
Var concat_channels(const std::vector<Var>& parts); // rank-3 (C,H,W)
Var slice_channels(const Var& a, int c0, int c1);   // [c0, c1)
Var pad_bottom_right(const Var& a, int new_h, int new_w); // zero pad
Var crop_top_left(const Var& a, int new_h, int new_w);
Var upsample2_nearest(const Var& a);
// broadcast a (1,H,W) weight over the channels of x (C,H,W)
Var broadcast_mul(const Var& w, const Var& x);

// ---- layers ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- sampling ----
// Backward warping by bilinear interpolation; differentiable in src and flow.
// The validity mask (non-differentiable, 1 where the sample footprint
// intersects the source) is written to *mask when non-null.
Var warp_bilinear(const Var& src, const Var& flow, Tensor* mask = nullptr);

// ---- reductions (scalar outputs) ----
Var mean_abs_diff(const Var& a, const Var& b);
Var mean_sq_diff(const Var& a, const Var& b);
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

// ---- kernels shared with the tensor-level (non-autodiff) APIs ----
namespace kernels {
// out (C,H,W), mask (H,W) optional; flow (2,H,W) in pixels, dx then dy.
void warp_forward(const Tensor& src, const Tensor& flow, Tensor& out, Tensor* mask);
void warp_backward(const Tensor& src, const Tensor& flow, const Tensor& dout, Tensor* dsrc,
                   Tensor* dflow);
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                    Tensor& out);
void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dout,
                     Tensor* dx, Tensor* dw, Tensor* db);
} // namespace kernels

} // namespace evfi

#endif
