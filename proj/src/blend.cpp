#include "evfi/blend.hpp"

namespace evfi {

BlendOutput attention_blend(const Var& i_syn, const Var& i_warp, const Hourglass& net) {
    require_same_shape(i_syn->value, i_warp->value, "attention_blend");
    BlendOutput out;
    out.weights = sigmoid_op(net(concat_channels({i_syn, i_warp})));
    Var inv = affine(out.weights, -1.0, 1.0);
    out.final = add(broadcast_mul(out.weights, i_syn), broadcast_mul(inv, i_warp));
    return out;
}

} // namespace evfi
