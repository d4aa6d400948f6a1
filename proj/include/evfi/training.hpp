#ifndef EVFI_TRAINING_HPP
#define EVFI_TRAINING_HPP

#include <string>
#include <vector>

#include "evfi/model.hpp"
#include "evfi/rng.hpp"

namespace evfi {

// lr_init * 0.5 * (1 + cos(pi * step / total_steps))
double cosine_lr(long step, long total_steps, double lr_init);

struct StageConfig {
    std::string stage; // synthesis | warping | averaging
    int epochs = 8;
    int batch_size = 1;
    double lr_init = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double clip_norm = 1.0; // global-norm gradient clip; <= 0 disables
    uint64_t seed = 0;
    std::vector<std::string> freeze; // module groups held fixed this stage

    nlohmann::json to_json() const;
    static StageConfig from_json(const nlohmann::json& j);
};

class Adam {
  public:
    Adam() = default;
    Adam(size_t n_params, double beta1, double beta2, double eps = 1e-8);
    // one update over flattened grads; grads are consumed as-is
    void step(std::vector<ParamEntry>& params, double lr);

    long t() const { return t_; }
    std::vector<double>& m() { return m_; }
    std::vector<double>& v() { return v_; }
    void set_t(long t) { t_ = t; }

  private:
    std::vector<double> m_, v_;
    double beta1_ = 0.9, beta2_ = 0.99, eps_ = 1e-8;
    long t_ = 0;
};

struct TrainState {
    std::string stage;
    long step = 0;
    int epoch = 0;
    std::vector<double> loss_history; // one entry per optimizer step
    std::string rng_state;
};

// resume snapshot: full-precision params + Adam moments + RNG position, so a
// resumed run reproduces the uninterrupted one bit-exactly
void save_train_state(const std::string& path, const TrainState& state, Model& model,
                      Adam& adam);
TrainState load_train_state(const std::string& path, Model& model, Adam& adam);

struct StageResult {
    TrainState state;
    double final_loss = 0.0;
    double wall_time_s = 0.0;
    double median_first_decile = 0.0;
    double median_last_decile = 0.0;
};

// Runs one stage over the dataset. Throws NonFiniteLoss (after writing a
// diagnostic dump next to snapshot_path) if the loss leaves the reals.
// snapshot_path, when non-empty, receives a resume snapshot after every epoch.
// stop_after_epoch interrupts the run early (schedule lengths still follow
// cfg.epochs) so a later call can resume from the snapshot.
StageResult train_stage(Model& model, const StageConfig& cfg,
                        const std::vector<SampleInputs>& data,
                        const std::string& snapshot_path = "",
                        const std::string& resume_from = "", int stop_after_epoch = -1);

struct ProtocolConfig {
    StageConfig synthesis;
    StageConfig warping;
    StageConfig averaging;
    std::string out_dir;
};

// Three-stage protocol: train synthesis, train warping, freeze both, train
// averaging. Emits per-stage checkpoints and returns the protocol report.
nlohmann::json run_protocol(Model& model, const ProtocolConfig& cfg,
                            const std::vector<SampleInputs>& data);

// ---- evaluation harness ----
struct EvalRecord {
    std::string sample_id;
    double psnr = 0.0;
    double ssim = 0.0;
};
struct EvalSummary {
    std::vector<EvalRecord> records;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

// which: final | synthesis | warping
EvalSummary evaluate_model(Model& model, const std::vector<SampleInputs>& data,
                           const std::string& which);

} // namespace evfi

#endif
