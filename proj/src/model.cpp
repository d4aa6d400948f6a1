#include "evfi/model.hpp"

namespace evfi {

nlohmann::json ModelConfig::to_json() const {
    return {{"bins", bins},
            {"levels", levels},
            {"synth_width", synth_width},
            {"flow_width", flow_width},
            {"blend_width", blend_width},
            {"transitional_branches", transitional_branches},
            {"event_update", event_update},
            {"norm", norm},
            {"flow_source", flow_source},
            {"flow_noise_sigma", flow_noise_sigma},
            {"lambda1", lambda1},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.bins = j.value("bins", c.bins);
    c.levels = j.value("levels", c.levels);
    c.synth_width = j.value("synth_width", c.synth_width);
    c.flow_width = j.value("flow_width", c.flow_width);
    c.blend_width = j.value("blend_width", c.blend_width);
    c.transitional_branches = j.value("transitional_branches", c.transitional_branches);
    c.event_update = j.value("event_update", c.event_update);
    c.norm = j.value("norm", c.norm);
    c.flow_source = j.value("flow_source", c.flow_source);
    c.flow_noise_sigma = j.value("flow_noise_sigma", c.flow_noise_sigma);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

HourglassConfig::Norm parse_norm(const std::string& s) {
    if (s == "none") return HourglassConfig::Norm::kNone;
    if (s == "instance") return HourglassConfig::Norm::kInstance;
    throw Error("InvalidConfig", "unknown norm: " + s);
}

} // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)), features(cfg_.seed) {
    if (cfg_.flow_source != "gt" && cfg_.flow_source != "gt_noisy" && cfg_.flow_source != "tiny")
        throw Error("InvalidConfig", "unknown flow_source: " + cfg_.flow_source);
    auto norm = parse_norm(cfg_.norm);
    HourglassConfig syn;
    syn.in_channels = 3 + cfg_.bins;
    syn.out_channels = 3;
    syn.levels = cfg_.levels;
    syn.base_width = cfg_.synth_width;
    syn.norm = norm;
    syn.residual_from_input = 3;
    f1 = Hourglass(syn, cfg_.seed + 1);
    f2 = Hourglass(syn, cfg_.seed + 2);

    // fusion input: direct fwd/bwd plus one final proxy pair per branch
    HourglassConfig fuse;
    fuse.in_channels = 6 + 6 * static_cast<int>(cfg_.transitional_branches.size());
    fuse.out_channels = 3;
    fuse.levels = cfg_.levels;
    fuse.base_width = cfg_.synth_width;
    fuse.norm = norm;
    fuse.zero_init_head = true;
    synth_fuse_net = Hourglass(fuse, cfg_.seed + 3);

    HourglassConfig gc1;
    gc1.in_channels = 2 + cfg_.bins;
    gc1.out_channels = 2;
    gc1.levels = cfg_.levels;
    gc1.base_width = cfg_.flow_width;
    gc1.norm = norm;
    gc1.zero_init_head = true;
    g1 = Hourglass(gc1, cfg_.seed + 4);

    HourglassConfig gc2;
    gc2.in_channels = 10;
    gc2.out_channels = 4;
    gc2.levels = cfg_.levels;
    gc2.base_width = cfg_.flow_width;
    gc2.norm = norm;
    gc2.zero_init_head = true;
    g2 = Hourglass(gc2, cfg_.seed + 5);

    HourglassConfig wf;
    wf.in_channels = 12;
    wf.out_channels = 3;
    wf.levels = cfg_.levels;
    wf.base_width = cfg_.synth_width;
    wf.norm = norm;
    wf.zero_init_head = true;
    warp_fuse_net = Hourglass(wf, cfg_.seed + 6);

    HourglassConfig bl;
    bl.in_channels = 6;
    bl.out_channels = 1;
    bl.levels = cfg_.levels;
    bl.base_width = cfg_.blend_width;
    bl.norm = norm;
    bl.zero_init_head = true;
    blend_net = Hourglass(bl, cfg_.seed + 7);

    if (cfg_.flow_source == "tiny") tiny_flow = std::make_unique<TinyFlowNet>(cfg_.seed + 8);
    freeze_all();
}

namespace {

void append_prefixed(std::vector<ParamEntry>& out, const std::string& prefix,
                     const std::vector<ParamEntry>& params) {
    for (const auto& p : params) out.push_back({prefix + "." + p.name, p.var});
}

} // namespace

std::vector<ParamEntry> Model::group_params(const std::string& group) {
    std::vector<ParamEntry> out;
    if (group == "synthesis" || group == "all") {
        append_prefixed(out, "f1", f1.params());
        append_prefixed(out, "f2", f2.params());
        append_prefixed(out, "synth_fuse", synth_fuse_net.params());
    }
    if (group == "warping" || group == "all") {
        append_prefixed(out, "g1", g1.params());
        append_prefixed(out, "g2", g2.params());
        append_prefixed(out, "warp_fuse", warp_fuse_net.params());
        if (tiny_flow && tiny_flow->trainable_params())
            append_prefixed(out, "tiny_flow", *tiny_flow->trainable_params());
    }
    if (group == "averaging" || group == "all") {
        append_prefixed(out, "blend", blend_net.params());
    }
    if (group == "all") {
        append_prefixed(out, "features", features.params());
    }
    if (out.empty()) throw Error("InvalidConfig", "unknown parameter group: " + group);
    return out;
}

uint64_t Model::group_hash(const std::string& group) { return hash_params(group_params(group)); }

void Model::freeze_all() {
    for (auto& p : group_params("all")) p.var->requires_grad = false;
}

void Model::set_stage_trainable(const std::string& stage) {
    freeze_all();
    for (auto& p : group_params(stage)) p.var->requires_grad = true;
}

SynthesisNets Model::synthesis_nets() const { return {&f1, &f2, &synth_fuse_net}; }

WarpingNets Model::warping_nets() const {
    return {&g1, &g2, &warp_fuse_net, cfg_.event_update};
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

FlowEstimator& Model::estimator_for(const SampleInputs& in,
                                    std::unique_ptr<FlowEstimator>& holder) {
    if (cfg_.flow_source == "tiny") return *tiny_flow;
    if (!in.has_flows)
        throw Error("MissingGroundTruth", "sample " + in.sample_id + " carries no scene flows");
    double sigma = cfg_.flow_source == "gt_noisy" ? cfg_.flow_noise_sigma : 0.0;
    holder = std::make_unique<GtFlowEstimator>(in.f01, in.f10, sigma,
                                               cfg_.seed ^ fnv1a(in.sample_id));
    return *holder;
}

SynthesisOutput Model::run_synthesis(const SampleInputs& in) const {
    return synthesis_forward(constant(in.i0), constant(in.i1), in.events_0t, in.events_t1,
                             synthesis_nets(), cfg_.bins, cfg_.transitional_branches);
}

WarpingOutput Model::run_warping(const SampleInputs& in, FlowEstimator& estimator) const {
    return warping_forward(constant(in.i0), constant(in.i1), in.events_0t, in.events_t1, in.t,
                           estimator, warping_nets(), cfg_.bins);
}

Model::FullOutput Model::run_full(const SampleInputs& in) {
    FullOutput out;
    out.syn = run_synthesis(in);
    std::unique_ptr<FlowEstimator> holder;
    out.warp = run_warping(in, estimator_for(in, holder));
    out.blend = attention_blend(out.syn.fused, out.warp.fused, blend_net);
    return out;
}

Tensor Model::predict(const SampleInputs& in, const std::string& which) {
    if (which == "synthesis") return run_synthesis(in).fused->value;
    if (which == "warping") {
        std::unique_ptr<FlowEstimator> holder;
        return run_warping(in, estimator_for(in, holder)).fused->value;
    }
    if (which == "final") return run_full(in).blend.final->value;
    throw Error("InvalidConfig", "unknown prediction head: " + which);
}

void Model::save(const std::string& path, const nlohmann::json& extra_meta) const {
    nlohmann::json meta = extra_meta;
    meta["model"] = cfg_.to_json();
    save_checkpoint(path, meta, const_cast<Model*>(this)->group_params("all"));
}

Model Model::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (!ck.meta.contains("model"))
        throw Error("MissingCheckpoint", "checkpoint lacks a model config: " + path);
    Model model(ModelConfig::from_json(ck.meta.at("model")));
    auto params = model.group_params("all");
    restore_params(ck, params);
    return model;
}

} // namespace evfi
