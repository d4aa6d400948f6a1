#include "evfi/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace evfi {

double cosine_lr(long step, long total_steps, double lr_init) {
    if (step < 0 || step > total_steps || total_steps <= 0)
        throw Error("InvalidConfig", "cosine_lr needs 0 <= step <= total_steps");
    return lr_init * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                           static_cast<double>(total_steps)));
}

nlohmann::json StageConfig::to_json() const {
    return {{"stage", stage},     {"epochs", epochs},       {"batch_size", batch_size},
            {"lr_init", lr_init}, {"beta1", beta1},         {"beta2", beta2},
            {"clip_norm", clip_norm}, {"seed", seed},       {"freeze", freeze}};
}

StageConfig StageConfig::from_json(const nlohmann::json& j) {
    StageConfig c;
    c.stage = j.value("stage", c.stage);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
    c.freeze = j.value("freeze", c.freeze);
    return c;
}

Adam::Adam(size_t n_params, double beta1, double beta2, double eps)
    : m_(n_params, 0.0), v_(n_params, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<ParamEntry>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t off = 0;
    for (auto& p : params) {
        Tensor& w = p.var->value;
        Tensor& g = p.var->grad;
        const bool has_grad = p.var->has_grad();
        for (size_t i = 0; i < w.size(); ++i, ++off) {
            double gi = has_grad ? g[i] : 0.0;
            m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * gi;
            v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * gi * gi;
            double mhat = m_[off] / bc1;
            double vhat = v_[off] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

namespace {

size_t total_param_count(const std::vector<ParamEntry>& params) {
    size_t n = 0;
    for (const auto& p : params) n += p.var->value.size();
    return n;
}

void zero_grads(std::vector<ParamEntry>& params) {
    for (auto& p : params)
        if (p.var->has_grad()) p.var->grad.fill(0.0);
}

double scale_and_clip(std::vector<ParamEntry>& params, double scale, double clip_norm) {
    double sq = 0.0;
    for (auto& p : params) {
        if (!p.var->has_grad()) continue;
        Tensor& g = p.var->grad;
        for (size_t i = 0; i < g.size(); ++i) {
            g[i] *= scale;
            sq += g[i] * g[i];
        }
    }
    double norm = std::sqrt(sq);
    if (clip_norm > 0.0 && norm > clip_norm) {
        double k = clip_norm / norm;
        for (auto& p : params) {
            if (!p.var->has_grad()) continue;
            Tensor& g = p.var->grad;
            for (size_t i = 0; i < g.size(); ++i) g[i] *= k;
        }
    }
    return norm;
}

LossReport stage_loss(Model& model, const std::string& stage, const SampleInputs& sample) {
    Var gt = constant(sample.target);
    if (stage == "synthesis") {
        return synthesis_loss(model.run_synthesis(sample), gt, model.features,
                              model.config().lambda1);
    }
    if (stage == "warping") {
        std::unique_ptr<FlowEstimator> holder;
        return warping_loss(model.run_warping(sample, model.estimator_for(sample, holder)), gt);
    }
    if (stage == "averaging") {
        return averaging_loss(model.run_full(sample).blend, gt, model.features,
                              model.config().lambda1);
    }
    throw Error("InvalidConfig", "unknown stage: " + stage);
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename T>
void put_raw(std::ofstream& os, const T* data, size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}
template <typename T>
void get_raw(std::ifstream& is, T* data, size_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

} // namespace

void save_train_state(const std::string& path, const TrainState& state, Model& model,
                      Adam& adam) {
    auto params = model.group_params("all");
    nlohmann::json meta{{"stage", state.stage},
                        {"step", state.step},
                        {"epoch", state.epoch},
                        {"rng", state.rng_state},
                        {"adam_t", adam.t()},
                        {"loss_history", state.loss_history},
                        {"n_model", total_param_count(params)},
                        {"n_adam", adam.m().size()}};
    std::string meta_str = meta.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("MissingFile", "cannot write " + path);
    os.write("EVTS", 4);
    uint32_t version = 1, len = static_cast<uint32_t>(meta_str.size());
    put_raw(os, &version, 1);
    put_raw(os, &len, 1);
    os.write(meta_str.data(), len);
    for (const auto& p : params) put_raw(os, p.var->value.data(), p.var->value.size());
    put_raw(os, adam.m().data(), adam.m().size());
    put_raw(os, adam.v().data(), adam.v().size());
    if (!os) throw Error("MissingFile", "short snapshot write " + path);
}

TrainState load_train_state(const std::string& path, Model& model, Adam& adam) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("MissingCheckpoint", "cannot open snapshot " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "EVTS", 4) != 0)
        throw Error("MissingCheckpoint", "bad snapshot magic in " + path);
    uint32_t version = 0, len = 0;
    get_raw(is, &version, 1);
    get_raw(is, &len, 1);
    if (version != 1) throw Error("MissingCheckpoint", "unsupported snapshot version");
    std::string meta_str(len, '\0');
    is.read(meta_str.data(), len);
    auto meta = nlohmann::json::parse(meta_str);

    TrainState state;
    state.stage = meta.at("stage").get<std::string>();
    state.step = meta.at("step").get<long>();
    state.epoch = meta.at("epoch").get<int>();
    state.rng_state = meta.at("rng").get<std::string>();
    state.loss_history = meta.at("loss_history").get<std::vector<double>>();

    auto params = model.group_params("all");
    if (meta.at("n_model").get<size_t>() != total_param_count(params))
        throw Error("MissingCheckpoint", "snapshot does not match the model");
    for (auto& p : params) get_raw(is, p.var->value.data(), p.var->value.size());
    size_t n_adam = meta.at("n_adam").get<size_t>();
    adam.m().assign(n_adam, 0.0);
    adam.v().assign(n_adam, 0.0);
    get_raw(is, adam.m().data(), n_adam);
    get_raw(is, adam.v().data(), n_adam);
    adam.set_t(meta.at("adam_t").get<long>());
    if (!is) throw Error("MissingCheckpoint", "truncated snapshot " + path);
    return state;
}

StageResult train_stage(Model& model, const StageConfig& cfg,
                        const std::vector<SampleInputs>& data, const std::string& snapshot_path,
                        const std::string& resume_from, int stop_after_epoch) {
    if (data.empty()) throw Error("MissingDataset", "training set is empty");
    if (cfg.stage == "averaging") {
        bool syn = false, warp = false;
        for (const auto& f : cfg.freeze) {
            syn = syn || f == "synthesis";
            warp = warp || f == "warping";
        }
        if (!syn || !warp)
            throw Error("InvalidConfig", "averaging stage must freeze synthesis and warping");
    }

    model.set_stage_trainable(cfg.stage);
    auto params = model.group_params(cfg.stage);
    Adam adam(total_param_count(params), cfg.beta1, cfg.beta2);

    TrainState state;
    state.stage = cfg.stage;
    Rng rng(cfg.seed ^ fnv1a(cfg.stage));
    if (!resume_from.empty()) {
        state = load_train_state(resume_from, model, adam);
        if (state.stage != cfg.stage)
            throw Error("MissingCheckpoint", "snapshot belongs to stage " + state.stage);
        rng = Rng::deserialize(state.rng_state);
    }

    const long steps_per_epoch =
        (static_cast<long>(data.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = steps_per_epoch * cfg.epochs;

    auto t_begin = std::chrono::steady_clock::now();
    std::vector<size_t> order(data.size());
    for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        // Fisher-Yates on the stage rng; the shuffle is part of the resumable
        // state
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);

        for (long b = 0; b < steps_per_epoch; ++b) {
            zero_grads(params);
            double batch_loss = 0.0;
            int in_batch = 0;
            for (int k = 0; k < cfg.batch_size; ++k) {
                size_t idx = static_cast<size_t>(b) * cfg.batch_size + k;
                if (idx >= order.size()) break;
                LossReport report = stage_loss(model, cfg.stage, data[order[idx]]);
                if (!std::isfinite(report.total_value())) {
                    if (!snapshot_path.empty()) {
                        nlohmann::json dump{{"stage", cfg.stage},
                                            {"step", state.step},
                                            {"sample", data[order[idx]].sample_id}};
                        for (const auto& c : report.components) dump["components"][c.name] = c.value;
                        std::ofstream os(snapshot_path + ".diag.json");
                        os << dump.dump(2);
                    }
                    throw Error("NonFiniteLoss", "loss diverged at step " +
                                                     std::to_string(state.step) + " on sample " +
                                                     data[order[idx]].sample_id);
                }
                backward(report.total);
                batch_loss += report.total_value();
                ++in_batch;
            }
            scale_and_clip(params, 1.0 / in_batch, cfg.clip_norm);
            double lr = cosine_lr(state.step, total_steps, cfg.lr_init);
            adam.step(params, lr);
            state.loss_history.push_back(batch_loss / in_batch);
            ++state.step;
        }
        state.epoch = epoch + 1;
        state.rng_state = rng.serialize();
        if (!snapshot_path.empty()) save_train_state(snapshot_path, state, model, adam);
        if (stop_after_epoch >= 0 && state.epoch >= stop_after_epoch) break;
    }
    auto t_end = std::chrono::steady_clock::now();

    model.freeze_all();
    StageResult result;
    result.state = std::move(state);
    result.final_loss =
        result.state.loss_history.empty() ? 0.0 : result.state.loss_history.back();
    result.wall_time_s = std::chrono::duration<double>(t_end - t_begin).count();
    const auto& hist = result.state.loss_history;
    size_t decile = std::max<size_t>(1, hist.size() / 10);
    result.median_first_decile =
        median_of(std::vector<double>(hist.begin(), hist.begin() + std::min(decile, hist.size())));
    result.median_last_decile =
        median_of(std::vector<double>(hist.end() - std::min(decile, hist.size()), hist.end()));
    return result;
}

nlohmann::json run_protocol(Model& model, const ProtocolConfig& cfg,
                            const std::vector<SampleInputs>& data) {
    nlohmann::json report;
    report["stages"] = nlohmann::json::array();

    struct StagePlan {
        const StageConfig* cfg;
        std::string checkpoint;
    };
    const std::vector<StagePlan> plan{
        {&cfg.synthesis, cfg.out_dir + "/synthesis.ckpt"},
        {&cfg.warping, cfg.out_dir + "/warping.ckpt"},
        {&cfg.averaging, cfg.out_dir + "/averaging.ckpt"},
    };
    for (const auto& stage : plan) {
        uint64_t syn_before = model.group_hash("synthesis");
        uint64_t warp_before = model.group_hash("warping");
        StageResult r = train_stage(model, *stage.cfg, data,
                                    cfg.out_dir + "/" + stage.cfg->stage + ".snapshot");
        model.save(stage.checkpoint, {{"stage", stage.cfg->stage}});
        nlohmann::json s{{"stage", stage.cfg->stage},
                         {"epochs", stage.cfg->epochs},
                         {"steps", r.state.step},
                         {"final_loss", r.final_loss},
                         {"median_first_decile", r.median_first_decile},
                         {"median_last_decile", r.median_last_decile},
                         {"wall_time_s", r.wall_time_s},
                         {"checkpoint_path", stage.checkpoint}};
        if (stage.cfg->stage == "averaging") {
            s["synthesis_hash_unchanged"] = model.group_hash("synthesis") == syn_before;
            s["warping_hash_unchanged"] = model.group_hash("warping") == warp_before;
        }
        report["stages"].push_back(std::move(s));
    }
    return report;
}

EvalSummary evaluate_model(Model& model, const std::vector<SampleInputs>& data,
                           const std::string& which) {
    if (data.empty()) throw Error("MissingDataset", "evaluation set is empty");
    model.freeze_all();
    EvalSummary summary;
    for (const auto& sample : data) {
        Tensor pred = model.predict(sample, which);
        EvalRecord rec;
        rec.sample_id = sample.sample_id;
        rec.psnr = psnr(pred, sample.target);
        rec.ssim = ssim(pred, sample.target);
        summary.records.push_back(std::move(rec));
    }
    for (const auto& r : summary.records) {
        summary.mean_psnr += r.psnr;
        summary.mean_ssim += r.ssim;
    }
    summary.mean_psnr /= static_cast<double>(summary.records.size());
    summary.mean_ssim /= static_cast<double>(summary.records.size());
    return summary;
}

} // namespace evfi
