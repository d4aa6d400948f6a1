#include "evfi/synthesis.hpp"

namespace evfi {

namespace {

std::vector<double> uniform_boundaries(const TimeWindow& w, int segments) {
    std::vector<double> b(static_cast<size_t>(segments) + 1);
    for (int i = 0; i <= segments; ++i)
        b[static_cast<size_t>(i)] = w.t_start + (w.t_end - w.t_start) * i / segments;
    b.front() = w.t_start;
    b.back() = w.t_end;
    return b;
}

std::vector<VoxelGrid> voxelized_slices(const EventStream& stream, int segments, int bins) {
    auto slices = slice(stream, uniform_boundaries(stream.window, segments));
    std::vector<VoxelGrid> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back(voxelize(s, bins));
    return out;
}

} // namespace

Var voxel_constant(const EventStream& stream, int bins) {
    return constant(voxelize(stream, bins).data);
}

Var direct_synthesize(const Var& boundary, const VoxelGrid& events, const Hourglass& f1) {
    if (events.data.dim(1) != boundary->value.dim(1) ||
        events.data.dim(2) != boundary->value.dim(2))
        throw Error("ShapeMismatch", "voxel grid does not match the boundary frame");
    return clamp01(f1(concat_channels({boundary, constant(events.data)})));
}

std::pair<std::vector<Var>, Var> transitional_synthesize(const Var& boundary,
                                                         const std::vector<VoxelGrid>& slices,
                                                         const Hourglass& f2) {
    if (slices.empty()) throw Error("EmptySliceList", "transitional chain needs >= 1 slice");
    std::vector<Var> proxies;
    Var cur = boundary;
    for (const auto& grid : slices) {
        cur = clamp01(f2(concat_channels({cur, constant(grid.data)})));
        proxies.push_back(cur);
    }
    return {proxies, cur};
}

Var synthesis_fuse(const std::vector<Var>& candidates, const Hourglass& fuse) {
    if (candidates.empty()) throw Error("EmptySliceList", "fusion needs candidates");
    for (const auto& c : candidates) require_same_shape(c->value, candidates[0]->value, "synthesis_fuse");
    Var mean = candidates[0];
    for (size_t i = 1; i < candidates.size(); ++i) mean = add(mean, candidates[i]);
    mean = affine(mean, 1.0 / static_cast<double>(candidates.size()), 0.0);
    return clamp01(add(fuse(concat_channels(candidates)), mean));
}

SynthesisOutput synthesis_forward(const Var& i0, const Var& i1, const EventStream& events_0t,
                                  const EventStream& events_t1, const SynthesisNets& nets,
                                  int bins, const std::vector<int>& transitional_steps) {
    SynthesisOutput out;
    out.direct_fwd = direct_synthesize(i0, voxelize(events_0t, bins), *nets.f1);
    out.direct_bwd = direct_synthesize(i1, voxelize(reverse(events_t1), bins), *nets.f1);

    const EventStream reversed_t1 = reverse(events_t1);
    std::vector<Var> candidates{out.direct_fwd, out.direct_bwd};
    for (int steps : transitional_steps) {
        if (steps < 1) throw Error("InvalidConfig", "transitional steps must be >= 1");
        TransitionalPair pair;
        pair.steps = steps;
        auto fwd = transitional_synthesize(i0, voxelized_slices(events_0t, steps, bins), *nets.f2);
        auto bwd = transitional_synthesize(i1, voxelized_slices(reversed_t1, steps, bins), *nets.f2);
        pair.proxies_fwd = std::move(fwd.first);
        pair.final_fwd = fwd.second;
        pair.proxies_bwd = std::move(bwd.first);
        pair.final_bwd = bwd.second;
        candidates.push_back(pair.final_fwd);
        candidates.push_back(pair.final_bwd);
        out.transitional.push_back(std::move(pair));
    }
    out.fused = synthesis_fuse(candidates, *nets.fuse);
    return out;
}

} // namespace evfi
