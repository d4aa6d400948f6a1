#ifndef EVFI_WARPING_HPP
#define EVFI_WARPING_HPP

#include <utility>

#include "evfi/events.hpp"
#include "evfi/flow.hpp"
#include "evfi/networks.hpp"

namespace evfi {

struct WarpedFrame {
    Var image;       // (3,H,W)
    Tensor validity; // (H,W)
};

struct WarpingOutput {
    FlowField ft0_init, ft1_init; // stage I, tensor copies for inspection
    Var ft0_update, ft1_update;   // stage II
    Var ft0_refine, ft1_refine;   // stage III
    WarpedFrame warped_fwd, warped_bwd;
    Var fused;
};

struct WarpingNets {
    const Hourglass* g1 = nullptr;
    const Hourglass* g2 = nullptr;
    const Hourglass* fuse = nullptr;
    bool event_update_enabled = true; // ablation switch
};

// residual flow from events: delta = g1(concat(f_init, E)); returns
// (delta, f_init + delta)
std::pair<Var, Var> event_update(const Var& f_init, const VoxelGrid& events, const Hourglass& g1);

// joint image-guided residual: g2(concat(ft0, ft1, i0, i1)) -> 4 channels
std::pair<Var, Var> refine(const Var& ft0_up, const Var& ft1_up, const Var& i0, const Var& i1,
                           const Hourglass& g2);

// fusion over warped frames, their validity masks and the refined flows,
// residual on the warped-frame mean, clamped to [0,1]
Var warp_fuse(const WarpedFrame& fwd, const WarpedFrame& bwd, const Var& ft0, const Var& ft1,
              const Hourglass& fuse);

// Stage I (Eq. 5 fusion of estimator flows at t), stage II per-direction
// event update, stage III refinement + backward warping + fusion.
WarpingOutput warping_forward(const Var& i0, const Var& i1, const EventStream& events_0t,
                              const EventStream& events_t1, double t, FlowEstimator& estimator,
                              const WarpingNets& nets, int bins);

} // namespace evfi

#endif
