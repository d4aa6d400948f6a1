#include "evfi/losses.hpp"

#include <cmath>

namespace evfi {

double LossReport::component(const std::string& name) const {
    for (const auto& c : components)
        if (c.name == name) return c.value;
    throw Error("InvalidConfig", "no loss component named " + name);
}

namespace {

LossReport combine(std::vector<std::pair<LossComponent, Var>> terms) {
    LossReport report;
    std::vector<Var> vars;
    std::vector<double> weights;
    for (auto& [comp, var] : terms) {
        comp.value = var->value[0];
        report.components.push_back(comp);
        vars.push_back(var);
        weights.push_back(comp.weight);
    }
    report.total = weighted_sum(vars, weights);
    return report;
}

} // namespace

LossReport reconstruction_loss(const SynthesisOutput& out, const Var& gt) {
    std::vector<std::pair<LossComponent, Var>> terms;
    terms.push_back({{"l1_fused", 0, 1}, mean_abs_diff(out.fused, gt)});
    terms.push_back({{"l1_direct_fwd", 0, 1}, mean_abs_diff(out.direct_fwd, gt)});
    terms.push_back({{"l1_direct_bwd", 0, 1}, mean_abs_diff(out.direct_bwd, gt)});
    for (size_t i = 0; i < out.transitional.size(); ++i) {
        std::string suffix = i == 0 ? "" : "_T" + std::to_string(out.transitional[i].steps);
        terms.push_back(
            {{"l1_proxy_fwd" + suffix, 0, 1}, mean_abs_diff(out.transitional[i].final_fwd, gt)});
        terms.push_back(
            {{"l1_proxy_bwd" + suffix, 0, 1}, mean_abs_diff(out.transitional[i].final_bwd, gt)});
    }
    return combine(std::move(terms));
}

Var perceptual_loss(const Var& pred, const Var& gt, const ToyFeatureExtractor& fx) {
    require_same_shape(pred->value, gt->value, "perceptual_loss");
    auto fp = fx.extract(pred);
    auto fg = fx.extract(gt);
    std::vector<Var> terms;
    std::vector<double> weights;
    for (size_t l = 0; l < fp.size(); ++l) {
        terms.push_back(mean_sq_diff(fp[l], fg[l]));
        weights.push_back(1.0);
    }
    return weighted_sum(terms, weights);
}

LossReport synthesis_loss(const SynthesisOutput& out, const Var& gt,
                          const ToyFeatureExtractor& fx, double lambda1) {
    LossReport report = reconstruction_loss(out, gt);
    Var perc = perceptual_loss(out.fused, gt, fx);
    std::vector<Var> vars{report.total, perc};
    report.components.push_back({"perceptual", perc->value[0], lambda1});
    report.total = weighted_sum(vars, {1.0, lambda1});
    return report;
}

LossReport warping_loss(const WarpingOutput& out, const Var& gt) {
    std::vector<std::pair<LossComponent, Var>> terms;
    terms.push_back({{"l1_fused", 0, 1}, mean_abs_diff(out.fused, gt)});
    terms.push_back({{"l1_warped_fwd", 0, 1}, mean_abs_diff(out.warped_fwd.image, gt)});
    terms.push_back({{"l1_warped_bwd", 0, 1}, mean_abs_diff(out.warped_bwd.image, gt)});
    return combine(std::move(terms));
}

LossReport averaging_loss(const BlendOutput& out, const Var& gt, const ToyFeatureExtractor& fx,
                          double lambda1) {
    Var l1 = mean_abs_diff(out.final, gt);
    Var perc = perceptual_loss(out.final, gt, fx);
    LossReport report;
    report.components.push_back({"l1_final", l1->value[0], 1.0});
    report.components.push_back({"perceptual", perc->value[0], lambda1});
    report.total = weighted_sum({l1, perc}, {1.0, lambda1});
    return report;
}

// -------------------------------------------------------------------- metrics

double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kSsimRadius = 5; // 11x11 window

const std::vector<double>& gaussian_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(11 * 11);
        double sum = 0;
        for (int y = -kSsimRadius; y <= kSsimRadius; ++y)
            for (int x = -kSsimRadius; x <= kSsimRadius; ++x) {
                double g = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
                v[static_cast<size_t>(y + kSsimRadius) * 11 + (x + kSsimRadius)] = g;
                sum += g;
            }
        for (auto& g : v) g /= sum;
        return v;
    }();
    return w;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    const int c = a.rank() == 3 ? a.dim(0) : 1;
    const int h = a.rank() == 3 ? a.dim(1) : a.dim(0);
    const int w = a.rank() == 3 ? a.dim(2) : a.dim(1);
    if (h < 11 || w < 11) throw Error("ShapeMismatch", "ssim needs at least 11x11 images");
    const auto& win = gaussian_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double acc = 0;
    size_t n = 0;
    for (int ci = 0; ci < c; ++ci) {
        const double* pa = a.data() + static_cast<size_t>(ci) * h * w;
        const double* pb = b.data() + static_cast<size_t>(ci) * h * w;
        for (int y = kSsimRadius; y < h - kSsimRadius; ++y)
            for (int x = kSsimRadius; x < w - kSsimRadius; ++x) {
                double mu_a = 0, mu_b = 0;
                const double* wp = win.data();
                for (int dy = -kSsimRadius; dy <= kSsimRadius; ++dy)
                    for (int dx = -kSsimRadius; dx <= kSsimRadius; ++dx, ++wp) {
                        size_t idx = static_cast<size_t>(y + dy) * w + (x + dx);
                        mu_a += *wp * pa[idx];
                        mu_b += *wp * pb[idx];
                    }
                double va = 0, vb = 0, cov = 0;
                wp = win.data();
                for (int dy = -kSsimRadius; dy <= kSsimRadius; ++dy)
                    for (int dx = -kSsimRadius; dx <= kSsimRadius; ++dx, ++wp) {
                        size_t idx = static_cast<size_t>(y + dy) * w + (x + dx);
                        double da = pa[idx] - mu_a, db = pb[idx] - mu_b;
                        va += *wp * da * da;
                        vb += *wp * db * db;
                        cov += *wp * da * db;
                    }
                double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
                double den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2);
                acc += num / den;
                ++n;
            }
    }
    return acc / static_cast<double>(n);
}

double endpoint_error(const Tensor& flow_est, const Tensor& flow_gt, const Tensor* mask) {
    require_same_shape(flow_est, flow_gt, "endpoint_error");
    int h = flow_est.dim(1), w = flow_est.dim(2);
    double acc = 0;
    size_t n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask && mask->at(y, x) == 0.0) continue;
            double dx = flow_est.at(0, y, x) - flow_gt.at(0, y, x);
            double dy = flow_est.at(1, y, x) - flow_gt.at(1, y, x);
            acc += std::sqrt(dx * dx + dy * dy);
            ++n;
        }
    return n ? acc / static_cast<double>(n) : 0.0;
}

} // namespace evfi
