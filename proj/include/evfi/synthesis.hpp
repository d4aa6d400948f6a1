#ifndef EVFI_SYNTHESIS_HPP
#define EVFI_SYNTHESIS_HPP

#include <utility>
#include <vector>

#include "evfi/events.hpp"
#include "evfi/networks.hpp"

namespace evfi {

// One transitional (proxy) chain pair, forward and reverse direction.
struct TransitionalPair {
    int steps = 0; // T
    std::vector<Var> proxies_fwd, proxies_bwd;
    Var final_fwd, final_bwd;
};

struct SynthesisOutput {
    Var direct_fwd, direct_bwd;
    std::vector<TransitionalPair> transitional;
    Var fused;

    // the default single-branch accessors
    const TransitionalPair& primary() const {
        if (transitional.empty()) throw Error("EmptySliceList", "no transitional branch");
        return transitional.front();
    }
};

struct SynthesisNets {
    const Hourglass* f1 = nullptr;
    const Hourglass* f2 = nullptr;
    const Hourglass* fuse = nullptr;
};

Var voxel_constant(const EventStream& stream, int bins);

// direct regression of the frame at the far end of the event window
Var direct_synthesize(const Var& boundary, const VoxelGrid& events, const Hourglass& f1);

// chain P_1 = f2(I, E_1); P_i = f2(P_{i-1}, E_i); returns all proxies and the
// final element
std::pair<std::vector<Var>, Var> transitional_synthesize(const Var& boundary,
                                                         const std::vector<VoxelGrid>& slices,
                                                         const Hourglass& f2);

// fusion over channel-concatenated candidates, residual on their mean,
// clamped to [0,1]
Var synthesis_fuse(const std::vector<Var>& candidates, const Hourglass& fuse);

// Full module: direct fwd/bwd, transitional chains per requested T (reverse
// direction consumes reversed event slices), then fusion.
SynthesisOutput synthesis_forward(const Var& i0, const Var& i1, const EventStream& events_0t,
                                  const EventStream& events_t1, const SynthesisNets& nets,
                                  int bins, const std::vector<int>& transitional_steps);

} // namespace evfi

#endif
