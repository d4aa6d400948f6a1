#include "evfi/warping.hpp"

namespace evfi {

std::pair<Var, Var> event_update(const Var& f_init, const VoxelGrid& events, const Hourglass& g1) {
    if (events.data.dim(1) != f_init->value.dim(1) || events.data.dim(2) != f_init->value.dim(2))
        throw Error("ShapeMismatch", "voxel grid does not match the flow field");
    Var delta = g1(concat_channels({f_init, constant(events.data)}));
    return {delta, add(f_init, delta)};
}

std::pair<Var, Var> refine(const Var& ft0_up, const Var& ft1_up, const Var& i0, const Var& i1,
                           const Hourglass& g2) {
    Var out = g2(concat_channels({ft0_up, ft1_up, i0, i1}));
    Var d0 = slice_channels(out, 0, 2);
    Var d1 = slice_channels(out, 2, 4);
    return {add(ft0_up, d0), add(ft1_up, d1)};
}

Var warp_fuse(const WarpedFrame& fwd, const WarpedFrame& bwd, const Var& ft0, const Var& ft1,
              const Hourglass& fuse) {
    require_same_shape(fwd.image->value, bwd.image->value, "warp_fuse");
    int h = fwd.image->value.dim(1), w = fwd.image->value.dim(2);
    Tensor mf({1, h, w}), mb({1, h, w});
    std::copy(fwd.validity.data(), fwd.validity.data() + fwd.validity.size(), mf.data());
    std::copy(bwd.validity.data(), bwd.validity.data() + bwd.validity.size(), mb.data());
    Var mean = affine(add(fwd.image, bwd.image), 0.5, 0.0);
    Var net_in = concat_channels(
        {fwd.image, bwd.image, constant(std::move(mf)), constant(std::move(mb)), ft0, ft1});
    return clamp01(add(fuse(net_in), mean));
}

WarpingOutput warping_forward(const Var& i0, const Var& i1, const EventStream& events_0t,
                              const EventStream& events_t1, double t, FlowEstimator& estimator,
                              const WarpingNets& nets, int bins) {
    if (!(t > 0.0 && t < 1.0)) throw Error("InvalidConfig", "warping_forward needs t in (0,1)");
    WarpingOutput out;
    FlowEstimate boundary = estimator.estimate(i0, i1);

    // Eq. 5 on the graph so a trainable estimator stays connected
    const double a0 = -(1.0 - t) * t, b0 = t * t;
    const double a1 = (1.0 - t) * (1.0 - t), b1 = -t * (1.0 - t);
    Var ft0_init = add(affine(boundary.f01, a0, 0.0), affine(boundary.f10, b0, 0.0));
    Var ft1_init = add(affine(boundary.f01, a1, 0.0), affine(boundary.f10, b1, 0.0));
    out.ft0_init = {ft0_init->value, t, 0.0};
    out.ft1_init = {ft1_init->value, t, 1.0};

    if (nets.event_update_enabled) {
        // E_{t->0} plays the [0,t) stream backward from t; E_{t->1} is the raw
        // [t,1) stream
        VoxelGrid e_t0 = voxelize(reverse(events_0t), bins);
        VoxelGrid e_t1 = voxelize(events_t1, bins);
        out.ft0_update = event_update(ft0_init, e_t0, *nets.g1).second;
        out.ft1_update = event_update(ft1_init, e_t1, *nets.g1).second;
    } else {
        out.ft0_update = ft0_init;
        out.ft1_update = ft1_init;
    }

    auto refined = refine(out.ft0_update, out.ft1_update, i0, i1, *nets.g2);
    out.ft0_refine = refined.first;
    out.ft1_refine = refined.second;

    out.warped_fwd.image = warp_bilinear(i0, out.ft0_refine, &out.warped_fwd.validity);
    out.warped_bwd.image = warp_bilinear(i1, out.ft1_refine, &out.warped_bwd.validity);
    out.fused = warp_fuse(out.warped_fwd, out.warped_bwd, out.ft0_refine, out.ft1_refine,
                          *nets.fuse);
    return out;
}

} // namespace evfi
