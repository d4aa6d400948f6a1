#ifndef EVFI_MODEL_HPP
#define EVFI_MODEL_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evfi/blend.hpp"
#include "evfi/dataset.hpp"
#include "evfi/losses.hpp"
#include "evfi/networks.hpp"
#include "evfi/synthesis.hpp"
#include "evfi/warping.hpp"

namespace evfi {

struct ModelConfig {
    int bins = 5;
    int levels = 3;
    int synth_width = 32;
    int flow_width = 24;
    int blend_width = 16;
    std::vector<int> transitional_branches = {2}; // T per transitional branch
    bool event_update = true;                     // stage II on/off
    std::string norm = "none";                    // none | instance
    std::string flow_source = "gt";               // gt | gt_noisy | tiny
    double flow_noise_sigma = 0.0;
    double lambda1 = 1.0;
    uint64_t seed = 0;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// All trainable maps of the three modules plus the frozen contracts.
class Model {
  public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    Hourglass f1, f2, synth_fuse_net, g1, g2, warp_fuse_net, blend_net;
    ToyFeatureExtractor features;
    std::unique_ptr<TinyFlowNet> tiny_flow;

    // "synthesis" | "warping" | "averaging" | "all"
    std::vector<ParamEntry> group_params(const std::string& group);
    uint64_t group_hash(const std::string& group);
    // enables gradients only for the given stage's parameters
    void set_stage_trainable(const std::string& stage);
    void freeze_all();

    SynthesisNets synthesis_nets() const;
    WarpingNets warping_nets() const;

    // per-sample flow estimator per config (holder keeps ownership)
    FlowEstimator& estimator_for(const SampleInputs& in,
                                 std::unique_ptr<FlowEstimator>& holder);

    SynthesisOutput run_synthesis(const SampleInputs& in) const;
    WarpingOutput run_warping(const SampleInputs& in, FlowEstimator& estimator) const;

    struct FullOutput {
        SynthesisOutput syn;
        WarpingOutput warp;
        BlendOutput blend;
    };
    FullOutput run_full(const SampleInputs& in);

    // "final" | "synthesis" | "warping": fused prediction as a plain tensor
    Tensor predict(const SampleInputs& in, const std::string& which);

    void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
    static Model load(const std::string& path);

  private:
    ModelConfig cfg_;
};

uint64_t fnv1a(const std::string& s);

} // namespace evfi

#endif
