#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "eegdec/checkpoint.hpp"
#include "eegdec/data_io.hpp"
#include "eegdec/model.hpp"
#include "eegdec/objective.hpp"

namespace eegdec {

struct OptimConfig {
    double lr0 = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double decay_factor = 0.9;
    int64_t decay_every_epochs = 100;
    int64_t epochs = 1000;
    int64_t batch_size = 64;
    uint64_t seed = 0;
    double grad_clip_norm = 0.0;   // 0 disables clipping
    int64_t eval_every_epochs = 1; // val evaluation cadence

    void validate() const;
};

void to_json(nlohmann::json& j, const OptimConfig& cfg);
void from_json(const nlohmann::json& j, OptimConfig& cfg);

// lr0 * decay_factor^floor(epoch / decay_every_epochs)
double scheduler_lr(const OptimConfig& cfg, int64_t epoch);

// Standard Adam with bias correction over a fixed parameter list.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<NamedParam> params, const OptimConfig& cfg);

    // One update from the grads currently on the parameters. Throws
    // ContractError naming the first parameter without a grad.
    void step(double lr);

    int64_t step_count() const { return t_; }

    const std::vector<NamedParam>& params() const { return params_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(int64_t t, const std::vector<Tensor>& m, const std::vector<Tensor>& v);

private:
    std::vector<NamedParam> params_;
    std::vector<Tensor> m_, v_;
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

// Scales all grads by min(1, max_norm/||g||); no-op when max_norm <= 0.
void clip_grad_norm(const std::vector<NamedParam>& params, double max_norm);

struct TrainLogEntry {
    int64_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_r;
    double lr = 0.0;
};

struct TrainResult {
    int64_t steps = 0;
    std::vector<TrainLogEntry> log;
    std::optional<double> best_val_r;
    std::filesystem::path last_checkpoint;
    std::filesystem::path best_checkpoint;
};

struct TrainOptions {
    std::filesystem::path out_dir;           // checkpoints + metrics.jsonl
    std::filesystem::path resume_from;       // optional train checkpoint
    std::ostream* info = nullptr;            // progress/warning sink
    bool write_checkpoints = true;
};

// Epoch loop: shuffle, one random crop per usable recording, batched
// forward/backward/Adam, periodic val evaluation, JSONL metrics,
// best-val and last checkpoints.
TrainResult train(DecoderModel& model, const Manifest& manifest, const OptimConfig& optim_cfg,
                  const LossConfig& loss_cfg, const TrainOptions& options);

// Training checkpoint: model + optimizer moments under "optim.m." /
// "optim.v." plus loop state in meta["train"].
void save_train_checkpoint(const std::filesystem::path& path, const DecoderModel& model,
                           const AdamOptimizer& optim, int64_t next_epoch, const Rng& crop_rng,
                           const Rng& dropout_rng);

} // namespace eegdec
