#ifndef EVFI_LOSSES_HPP
#define EVFI_LOSSES_HPP

#include <string>
#include <vector>

#include "evfi/blend.hpp"
#include "evfi/networks.hpp"
#include "evfi/synthesis.hpp"
#include "evfi/warping.hpp"

namespace evfi {

struct LossComponent {
    std::string name;
    double value = 0.0;
    double weight = 1.0;
};

struct LossReport {
    Var total; // scalar graph node; backward() trains the active stage
    std::vector<LossComponent> components;

    double total_value() const { return total->value[0]; }
    double component(const std::string& name) const;
};

// L1 over the fused output, both direct candidates and both final proxies of
// every transitional branch (mean-reduced per element).
LossReport reconstruction_loss(const SynthesisOutput& out, const Var& gt);

// sum over pyramid levels of mean squared feature differences
Var perceptual_loss(const Var& pred, const Var& gt, const ToyFeatureExtractor& fx);

// L_s = L_r + lambda1 * perceptual(fused, gt)
LossReport synthesis_loss(const SynthesisOutput& out, const Var& gt,
                          const ToyFeatureExtractor& fx, double lambda1);

// L_w = l1(fused) + l1(warped_fwd) + l1(warped_bwd)
LossReport warping_loss(const WarpingOutput& out, const Var& gt);

// final-stage loss: l1(final) + lambda1 * perceptual(final, gt)
LossReport averaging_loss(const BlendOutput& out, const Var& gt, const ToyFeatureExtractor& fx,
                          double lambda1);

// ---- metrics (plain tensors) ----

inline constexpr double kPsnrCap = 99.0; // sentinel for identical images

// 10*log10(1/MSE) for [0,1] images, capped at kPsnrCap
double psnr(const Tensor& a, const Tensor& b);

// SSIM with an 11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, L=1;
// valid-window reduction, averaged over channels
double ssim(const Tensor& a, const Tensor& b);

// mean Euclidean flow error over the mask (all pixels when mask is null)
double endpoint_error(const Tensor& flow_est, const Tensor& flow_gt, const Tensor* mask = nullptr);

} // namespace evfi

#endif
