#ifndef EVFI_FLOW_HPP
#define EVFI_FLOW_HPP

#include <string>
#include <utility>

#include "evfi/tensor.hpp"

namespace evfi {

// Per-pixel displacement field in pixels, channels (dx, dy). Target-to-source
// convention: the flow stored at an output pixel points into the image it
// will be sampled from.
struct FlowField {
    Tensor data; // (2, H, W)
    double src_time = 0.0;
    double dst_time = 1.0;

    static FlowField zeros(int h, int w) { return {Tensor({2, h, w}), 0.0, 1.0}; }
    static FlowField constant(int h, int w, double dx, double dy);
    int height() const { return data.dim(1); }
    int width() const { return data.dim(2); }
};

struct WarpResult {
    Tensor image;    // (C, H, W)
    Tensor validity; // (H, W) in {0,1}; 0 where the sample footprint is fully outside
};

// Quadratic time-parametrized fusion of the boundary flows:
//   Ft0 = -(1-t) t F01 + t^2 F10
//   Ft1 = (1-t)^2 F01 - t (1-t) F10
std::pair<FlowField, FlowField> fuse_initial_flow(const FlowField& f01, const FlowField& f10,
                                                  double t);

// Bilinear backward warping with zero fill; see kernels::warp_forward for the
// differentiable path used inside the branches.
WarpResult backward_warp(const Tensor& src, const FlowField& flow);

// Element-wise base + delta; metadata inherited from base.
FlowField compose_residual(const FlowField& base, const FlowField& delta);

// ---- raw flow file: "FLO2" | u32 W | u32 H, then row-major f32 (dx,dy) ----
void write_flo(const std::string& path, const FlowField& flow);
FlowField read_flo(const std::string& path);

} // namespace evfi

#endif
