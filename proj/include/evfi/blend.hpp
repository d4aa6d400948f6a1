#ifndef EVFI_BLEND_HPP
#define EVFI_BLEND_HPP

#include "evfi/networks.hpp"

namespace evfi {

struct BlendOutput {
    Var final;   // (3,H,W) in [0,1]
    Var weights; // (1,H,W) in [0,1]
};

// Pixel-wise convex blend: w = sigmoid(net(concat(i_syn, i_warp))),
// final = w * i_syn + (1-w) * i_warp with the weight broadcast over channels.
BlendOutput attention_blend(const Var& i_syn, const Var& i_warp, const Hourglass& net);

} // namespace evfi

#endif
