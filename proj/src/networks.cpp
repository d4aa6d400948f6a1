#include "evfi/networks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "evfi/rng.hpp"

namespace evfi {

namespace {

Var init_conv_weight(int co, int ci, int k, Rng& rng, bool zero) {
    Tensor w({co, ci, k, k});
    if (!zero) {
        double limit = std::sqrt(6.0 / (static_cast<double>(ci) * k * k));
        for (size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
    }
    return leaf(std::move(w), false);
}

int round_up(int v, int multiple) { return (v + multiple - 1) / multiple * multiple; }

} // namespace

int HourglassConfig::width_at(int level) const {
    int e = std::min(level, width_doubling_cap);
    return base_width << e;
}

Hourglass::Hourglass(HourglassConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    if (cfg_.levels < 1 || cfg_.base_width < 1 || cfg_.in_channels < 1 || cfg_.out_channels < 1)
        throw Error("InvalidConfig", "hourglass needs levels/base_width/channels >= 1");
    Rng rng(seed);
    const bool norm = cfg_.norm == HourglassConfig::Norm::kInstance;
    auto make = [&](const std::string& name, int ci, int co, int stride, bool with_norm,
                    bool zero) {
        Conv c;
        c.stride = stride;
        c.w = init_conv_weight(co, ci, 3, rng, zero);
        c.b = leaf(Tensor({co}), false);
        params_.push_back({name + ".w", c.w});
        params_.push_back({name + ".b", c.b});
        if (with_norm) {
            c.gamma = leaf(Tensor({co}, 1.0), false);
            c.beta = leaf(Tensor({co}), false);
            params_.push_back({name + ".gamma", c.gamma});
            params_.push_back({name + ".beta", c.beta});
        }
        return c;
    };

    stem_ = make("stem", cfg_.in_channels, cfg_.width_at(0), 1, norm, false);
    for (int l = 1; l <= cfg_.levels; ++l)
        enc_.push_back(make("enc" + std::to_string(l), cfg_.width_at(l - 1), cfg_.width_at(l), 2,
                            norm, false));
    bottleneck_ = make("bottleneck", cfg_.width_at(cfg_.levels), cfg_.width_at(cfg_.levels), 1,
                       false, false);
    for (int l = cfg_.levels; l >= 1; --l) {
        up_.push_back(make("up" + std::to_string(l), cfg_.width_at(l), cfg_.width_at(l - 1), 1,
                           false, false));
        merge_.push_back(make("merge" + std::to_string(l), 2 * cfg_.width_at(l - 1),
                              cfg_.width_at(l - 1), 1, norm, false));
    }
    head_ = make("head", cfg_.width_at(0), cfg_.out_channels, 1, false, cfg_.zero_init_head);
}

Var Hourglass::apply(const Conv& c, const Var& x, bool activate) const {
    Var y = conv2d(x, c.w, c.b, c.stride, 1);
    if (c.gamma) y = instance_norm(y, c.gamma, c.beta);
    return activate ? leaky_relu(y) : y;
}

Var Hourglass::forward(const Var& x) const {
    if (x->value.rank() != 3 || x->value.dim(0) != cfg_.in_channels)
        throw Error("ShapeMismatch",
                    "hourglass expects (" + std::to_string(cfg_.in_channels) + ",H,W) input");
    const int h = x->value.dim(1), w = x->value.dim(2);
    const int align = 1 << cfg_.levels;
    Var in = pad_bottom_right(x, round_up(h, align), round_up(w, align));

    std::vector<Var> skips;
    Var y = apply(stem_, in, true);
    skips.push_back(y);
    for (const auto& e : enc_) {
        y = apply(e, y, true);
        skips.push_back(y);
    }
    y = apply(bottleneck_, y, true);
    for (size_t i = 0; i < up_.size(); ++i) {
        y = apply(up_[i], upsample2_nearest(y), true);
        const Var& skip = skips[skips.size() - 2 - i];
        y = apply(merge_[i], concat_channels({y, skip}), true);
    }
    y = apply(head_, y, false);
    y = crop_top_left(y, h, w);
    if (cfg_.residual_from_input > 0)
        y = add(y, slice_channels(x, 0, cfg_.residual_from_input));
    if (cfg_.final_activation == HourglassConfig::FinalActivation::kSigmoid) y = sigmoid_op(y);
    return y;
}

size_t Hourglass::param_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.var->value.size();
    return n;
}

void Hourglass::set_trainable(bool trainable) {
    for (auto& p : params_) p.var->requires_grad = trainable;
}

// ----------------------------------------------------------------- features

ToyFeatureExtractor::ToyFeatureExtractor(uint64_t seed) {
    Rng rng(seed ^ 0x5eedf00dULL);
    const int chans[4] = {3, 8, 12, 16};
    for (int l = 0; l < 3; ++l) {
        w_.push_back(init_conv_weight(chans[l + 1], chans[l], 3, rng, false));
        b_.push_back(leaf(Tensor({chans[l + 1]}), false));
        params_.push_back({"feat" + std::to_string(l) + ".w", w_.back()});
        params_.push_back({"feat" + std::to_string(l) + ".b", b_.back()});
    }
}

std::vector<Var> ToyFeatureExtractor::extract(const Var& image) const {
    const int h = image->value.dim(1), w = image->value.dim(2);
    Var y = pad_bottom_right(image, round_up(h, 8), round_up(w, 8));
    std::vector<Var> feats;
    for (size_t l = 0; l < w_.size(); ++l) {
        y = tanh_op(conv2d(y, w_[l], b_[l], 2, 1));
        feats.push_back(y);
    }
    return feats;
}

// ------------------------------------------------------------- flow sources

GtFlowEstimator::GtFlowEstimator(FlowField f01, FlowField f10, double sigma, uint64_t seed)
    : f01_(std::move(f01)), f10_(std::move(f10)) {
    if (f01_.data.empty() || f10_.data.empty())
        throw Error("MissingGroundTruth", "ground-truth flows are empty");
    if (sigma > 0.0) {
        Rng rng(seed ^ 0xf10f10ULL);
        for (size_t i = 0; i < f01_.data.size(); ++i) f01_.data[i] += rng.normal(0.0, sigma);
        for (size_t i = 0; i < f10_.data.size(); ++i) f10_.data[i] += rng.normal(0.0, sigma);
    }
}

FlowEstimate GtFlowEstimator::estimate(const Var& i0, const Var& i1) {
    if (i0->value.dim(1) != f01_.height() || i0->value.dim(2) != f01_.width())
        throw Error("ShapeMismatch", "estimator flows do not match the frame size");
    (void)i1;
    return {constant(f01_.data), constant(f10_.data)};
}

TinyFlowNet::TinyFlowNet(uint64_t seed) {
    HourglassConfig cfg;
    cfg.in_channels = 6;
    cfg.out_channels = 4;
    cfg.levels = 2;
    cfg.base_width = 12;
    cfg.zero_init_head = true;
    net_.emplace(cfg, seed);
}

FlowEstimate TinyFlowNet::estimate(const Var& i0, const Var& i1) {
    Var out = net_->forward(concat_channels({i0, i1}));
    return {slice_channels(out, 0, 2), slice_channels(out, 2, 4)};
}

// --------------------------------------------------------------- checkpoint

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<ParamEntry>& params) {
    nlohmann::json full = meta;
    full["format_version"] = 1;
    auto dir = nlohmann::json::array();
    for (const auto& p : params)
        dir.push_back({{"name", p.name}, {"count", p.var->value.size()}});
    full["arrays"] = dir;
    std::string meta_str = full.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("MissingFile", "cannot open for writing: " + path);
    os.write("EVCK", 4);
    uint32_t version = 1, len = static_cast<uint32_t>(meta_str.size());
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&len), 4);
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    std::vector<float> buf;
    for (const auto& p : params) {
        buf.resize(p.var->value.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(p.var->value[i]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw Error("MissingFile", "short checkpoint write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("MissingCheckpoint", "cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "EVCK", 4) != 0)
        throw Error("MissingCheckpoint", "bad checkpoint magic in " + path);
    uint32_t version = 0, len = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&len), 4);
    if (version != 1) throw Error("MissingCheckpoint", "unsupported checkpoint version");
    std::string meta_str(len, '\0');
    is.read(meta_str.data(), len);
    Checkpoint ck;
    ck.meta = nlohmann::json::parse(meta_str);
    for (const auto& entry : ck.meta.at("arrays")) {
        size_t count = entry.at("count").get<size_t>();
        std::vector<float> buf(count);
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        ck.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(buf));
    }
    if (!is) throw Error("MissingCheckpoint", "truncated checkpoint " + path);
    return ck;
}

void restore_params(const Checkpoint& ck, std::vector<ParamEntry>& params) {
    if (ck.arrays.size() != params.size())
        throw Error("MissingCheckpoint", "checkpoint parameter directory does not match model");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, arr] = ck.arrays[i];
        if (name != params[i].name || arr.size() != params[i].var->value.size())
            throw Error("MissingCheckpoint", "checkpoint array mismatch at " + name);
        for (size_t j = 0; j < arr.size(); ++j) params[i].var->value[j] = arr[j];
    }
}

uint64_t hash_params(const std::vector<ParamEntry>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params) {
        mix(p.name.data(), p.name.size());
        mix(p.var->value.data(), p.var->value.size() * sizeof(double));
    }
    return h;
}

} // namespace evfi
