#ifndef EVFI_NETWORKS_HPP
#define EVFI_NETWORKS_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evfi/autodiff.hpp"
#include "evfi/flow.hpp"

#include "json.hpp"

namespace evfi {

struct ParamEntry {
    std::string name;
    Var var;
};

struct HourglassConfig {
    int in_channels = 3;
    int out_channels = 3;
    int levels = 3;     // downsampling stages
    int base_width = 32;
    enum class Norm { kNone, kInstance } norm = Norm::kNone;
    enum class FinalActivation { kNone, kSigmoid } final_activation = FinalActivation::kNone;
    // residual heads start as identity; used for g1/g2 and the fusion nets
    bool zero_init_head = false;
    // add input channels [0, n) to the head output (image-to-image nets)
    int residual_from_input = 0;
    // channel width at level l is base_width * 2^min(l, cap)
    int width_doubling_cap = 2;

    int width_at(int level) const;
};

// Skip-connected encoder-decoder with stride-2 downsampling, nearest-neighbor
// upsampling and 3x3 convolutions throughout. Inputs of any spatial size are
// zero-padded up to a multiple of 2^levels and the output is cropped back.
class Hourglass {
  public:
    Hourglass() = default;
    Hourglass(HourglassConfig cfg, uint64_t seed);

    Var forward(const Var& x) const;
    Var operator()(const Var& x) const { return forward(x); }

    const HourglassConfig& config() const { return cfg_; }
    std::vector<ParamEntry>& params() { return params_; }
    const std::vector<ParamEntry>& params() const { return params_; }
    size_t param_count() const;
    void set_trainable(bool trainable);

  private:
    struct Conv {
        Var w, b;
        int stride = 1;
        Var gamma, beta; // instance norm, when enabled
    };
    Conv make_conv(const std::string& name, int ci, int co, int stride, bool norm, bool zero);
    Var apply(const Conv& c, const Var& x, bool activate) const;

    HourglassConfig cfg_;
    Conv stem_;
    std::vector<Conv> enc_;
    Conv bottleneck_;
    std::vector<Conv> up_, merge_;
    Conv head_;
    std::vector<ParamEntry> params_;
};

// Frozen random 3-scale convolutional pyramid backing the perceptual loss.
// Features at (C1,H/2,W/2), (C2,H/4,W/4), (C3,H/8,W/8).
class ToyFeatureExtractor {
  public:
    explicit ToyFeatureExtractor(uint64_t seed = 0);
    std::vector<Var> extract(const Var& image) const;
    const std::vector<ParamEntry>& params() const { return params_; }

  private:
    std::vector<Var> w_, b_;
    std::vector<ParamEntry> params_;
};

struct FlowEstimate {
    Var f01, f10; // (2,H,W) each
};

// Boundary-flow estimator contract. Frozen implementations return constants;
// the trainable tiny net returns graph-connected flows.
class FlowEstimator {
  public:
    virtual ~FlowEstimator() = default;
    virtual FlowEstimate estimate(const Var& i0, const Var& i1) = 0;
    virtual bool trainable() const { return false; }
    virtual std::vector<ParamEntry>* trainable_params() { return nullptr; }
};

// Analytic scene flows fixed at construction; optional Gaussian corruption
// with the noise drawn once, so repeated estimates are identical.
class GtFlowEstimator : public FlowEstimator {
  public:
    GtFlowEstimator(FlowField f01, FlowField f10, double sigma = 0.0, uint64_t seed = 0);
    FlowEstimate estimate(const Var& i0, const Var& i1) override;

  private:
    FlowField f01_, f10_;
};

// Small trainable flow net behind the same contract, for realism experiments.
class TinyFlowNet : public FlowEstimator {
  public:
    explicit TinyFlowNet(uint64_t seed);
    FlowEstimate estimate(const Var& i0, const Var& i1) override;
    bool trainable() const override { return true; }
    std::vector<ParamEntry>* trainable_params() override { return net_.has_value() ? &net_->params() : nullptr; }
    Hourglass& net() { return *net_; }

  private:
    std::optional<Hourglass> net_;
};

// ---- checkpoint container: "EVCK" | u32 version | u32 meta_len | meta JSON
//      | named flat f32 arrays in directory order ----
struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, std::vector<float>>> arrays;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<ParamEntry>& params);
Checkpoint load_checkpoint(const std::string& path);
// copies f32 arrays into matching params; throws MissingCheckpoint on
// name/size mismatch
void restore_params(const Checkpoint& ck, std::vector<ParamEntry>& params);

uint64_t hash_params(const std::vector<ParamEntry>& params);

} // namespace evfi

#endif
