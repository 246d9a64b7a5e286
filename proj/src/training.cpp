#include "eegdec/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eegdec/inference.hpp"

namespace eegdec {

void OptimConfig::validate() const {
    if (lr0 <= 0.0) throw ConfigError("lr0 must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("adam betas must be in [0, 1)");
    }
    if (adam_eps <= 0.0) throw ConfigError("adam_eps must be > 0");
    if (decay_factor <= 0.0 || decay_factor > 1.0) {
        throw ConfigError("decay_factor must be in (0, 1]");
    }
    if (decay_every_epochs < 1) throw ConfigError("decay_every_epochs must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be >= 0");
    if (eval_every_epochs < 1) throw ConfigError("eval_every_epochs must be >= 1");
}

void to_json(nlohmann::json& j, const OptimConfig& cfg) {
    j = nlohmann::json{{"lr0", cfg.lr0},
                       {"beta1", cfg.beta1},
                       {"beta2", cfg.beta2},
                       {"adam_eps", cfg.adam_eps},
                       {"decay_factor", cfg.decay_factor},
                       {"decay_every_epochs", cfg.decay_every_epochs},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"seed", cfg.seed},
                       {"grad_clip_norm", cfg.grad_clip_norm},
                       {"eval_every_epochs", cfg.eval_every_epochs}};
}

void from_json(const nlohmann::json& j, OptimConfig& cfg) {
    OptimConfig defaults;
    cfg.lr0 = j.value("lr0", defaults.lr0);
    cfg.beta1 = j.value("beta1", defaults.beta1);
    cfg.beta2 = j.value("beta2", defaults.beta2);
    cfg.adam_eps = j.value("adam_eps", defaults.adam_eps);
    cfg.decay_factor = j.value("decay_factor", defaults.decay_factor);
    cfg.decay_every_epochs = j.value("decay_every_epochs", defaults.decay_every_epochs);
    cfg.epochs = j.value("epochs", defaults.epochs);
    cfg.batch_size = j.value("batch_size", defaults.batch_size);
    cfg.seed = j.value("seed", defaults.seed);
    cfg.grad_clip_norm = j.value("grad_clip_norm", defaults.grad_clip_norm);
    cfg.eval_every_epochs = j.value("eval_every_epochs", defaults.eval_every_epochs);
}

double scheduler_lr(const OptimConfig& cfg, int64_t epoch) {
    if (epoch < 0) throw ContractError("scheduler epoch must be >= 0");
    const int64_t decays = epoch / cfg.decay_every_epochs;
    return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(decays));
}

AdamOptimizer::AdamOptimizer(std::vector<NamedParam> params, const OptimConfig& cfg)
    : params_(std::move(params)), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.tensor.shape()));
        v_.push_back(Tensor::zeros(p.tensor.shape()));
    }
}

void AdamOptimizer::step(double lr) {
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) {
            throw ContractError("adam step: parameter '" + p.path + "' has no gradient");
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor theta = params_[i].tensor;
        auto tv = theta.values_mut();
        const auto g = theta.grad_view();
        auto mv = m_[i].values_mut();
        auto vv = v_[i].values_mut();
        for (size_t k = 0; k < tv.size(); ++k) {
            mv[k] = beta1_ * mv[k] + (1.0 - beta1_) * g[k];
            vv[k] = beta2_ * vv[k] + (1.0 - beta2_) * g[k] * g[k];
            const double m_hat = mv[k] / bc1;
            const double v_hat = vv[k] / bc2;
            tv[k] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

void AdamOptimizer::restore(int64_t t, const std::vector<Tensor>& m, const std::vector<Tensor>& v) {
    if (m.size() != params_.size() || v.size() != params_.size()) {
        throw ContractError("adam restore: moment count mismatch");
    }
    t_ = t;
    for (size_t i = 0; i < params_.size(); ++i) {
        if (m[i].shape() != params_[i].tensor.shape()) {
            throw ContractError("adam restore: moment shape mismatch for " + params_[i].path);
        }
        std::copy(m[i].values().begin(), m[i].values().end(), m_[i].values_mut().begin());
        std::copy(v[i].values().begin(), v[i].values().end(), v_[i].values_mut().begin());
    }
}

void clip_grad_norm(const std::vector<NamedParam>& params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p.tensor.grad_view()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& p : params) {
        Tensor t = p.tensor;
        for (auto& g : t.grad()) g *= scale;
    }
}

// ---- checkpointing ----------------------------------------------------------------

namespace {

nlohmann::json rng_state_json(const Rng& rng) {
    nlohmann::json arr = nlohmann::json::array();
    for (uint64_t w : rng.state()) arr.push_back(std::to_string(w));
    return arr;
}

Rng rng_from_json(const nlohmann::json& arr) {
    std::array<uint64_t, 5> st{};
    if (!arr.is_array() || arr.size() != st.size()) {
        throw FormatError("checkpoint rng state must be an array of 5 words");
    }
    for (size_t i = 0; i < st.size(); ++i) st[i] = std::stoull(arr[i].get<std::string>());
    Rng rng(0);
    rng.set_state(st);
    return rng;
}

} // namespace

void save_train_checkpoint(const std::filesystem::path& path, const DecoderModel& model,
                           const AdamOptimizer& optim, int64_t next_epoch, const Rng& crop_rng,
                           const Rng& dropout_rng) {
    Checkpoint ckpt;
    ckpt.meta["config"] = model.config();
    ckpt.meta["train"] = {{"next_epoch", next_epoch},
                          {"step", optim.step_count()},
                          {"rng_crop", rng_state_json(crop_rng)},
                          {"rng_dropout", rng_state_json(dropout_rng)}};
    for (const auto& p : model.parameters()) ckpt.add(p.path, p.tensor);
    const auto& params = optim.params();
    for (size_t i = 0; i < params.size(); ++i) {
        ckpt.add("optim.m." + params[i].path, optim.first_moments()[i]);
        ckpt.add("optim.v." + params[i].path, optim.second_moments()[i]);
    }
    ckpt.save(path);
}

// ---- train loop ----------------------------------------------------------------

namespace {

struct UsableRecording {
    const RecordingPair* rec;
    int subject_id;
};

std::string format_losses(const std::vector<double>& history) {
    std::ostringstream os;
    const size_t start = history.size() > 20 ? history.size() - 20 : 0;
    for (size_t i = start; i < history.size(); ++i) {
        if (i > start) os << ", ";
        os << history[i];
    }
    return os.str();
}

} // namespace

TrainResult train(DecoderModel& model, const Manifest& manifest, const OptimConfig& optim_cfg,
                  const LossConfig& loss_cfg, const TrainOptions& options) {
    optim_cfg.validate();
    loss_cfg.validate();
    const ModelConfig& mcfg = model.config();
    const int64_t segment = mcfg.segment_samples();

    const std::vector<RecordingPair> train_recs = load_split(manifest, Split::train);
    const std::vector<RecordingPair> val_recs = load_split(manifest, Split::val);

    std::vector<const RecordingPair*> usable;
    for (const auto& rec : train_recs) {
        if (rec.samples() >= segment) {
            usable.push_back(&rec);
        } else if (options.info) {
            *options.info << "warning: skipping " << rec.samples() << "-sample recording of subject "
                          << rec.subject_id << " (segment needs " << segment << ")\n";
        }
    }
    if (usable.empty()) {
        throw ConfigError("no usable train recordings: all shorter than one segment of " +
                          std::to_string(segment) + " samples");
    }

    AdamOptimizer optim(model.parameters(), optim_cfg);
    Rng run_rng(optim_cfg.seed);
    Rng crop_rng = run_rng.substream("crop");
    Rng dropout_rng = run_rng.substream("dropout");
    int64_t start_epoch = 0;

    if (!options.resume_from.empty()) {
        const Checkpoint ckpt = Checkpoint::load(options.resume_from);
        if (!ckpt.meta.contains("train")) {
            throw FormatError(options.resume_from.string() + " is not a training checkpoint");
        }
        DecoderModel restored = model_from_checkpoint(ckpt);
        auto dst = model.parameters();
        auto src = restored.parameters();
        for (size_t i = 0; i < dst.size(); ++i) {
            if (dst[i].tensor.shape() != src[i].tensor.shape()) {
                throw FormatError("resume checkpoint shape mismatch at " + dst[i].path);
            }
            Tensor t = dst[i].tensor;
            std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(),
                      t.values_mut().begin());
        }
        std::vector<Tensor> m, v;
        for (const auto& p : dst) {
            const auto* em = ckpt.find("optim.m." + p.path);
            const auto* ev = ckpt.find("optim.v." + p.path);
            if (!em || !ev) throw FormatError("resume checkpoint missing moments for " + p.path);
            m.push_back(Tensor::from_values(em->shape, em->data));
            v.push_back(Tensor::from_values(ev->shape, ev->data));
        }
        const auto& tj = ckpt.meta.at("train");
        optim.restore(tj.at("step").get<int64_t>(), m, v);
        crop_rng = rng_from_json(tj.at("rng_crop"));
        dropout_rng = rng_from_json(tj.at("rng_dropout"));
        start_epoch = tj.at("next_epoch").get<int64_t>();
    }

    std::ofstream metrics;
    if (options.write_checkpoints) {
        std::filesystem::create_directories(options.out_dir);
        const auto mode = start_epoch > 0 ? std::ios::app : std::ios::trunc;
        metrics.open(options.out_dir / "metrics.jsonl", mode);
        if (!metrics) throw ConfigError("cannot write metrics under " + options.out_dir.string());
    }

    TrainResult result;
    result.steps = optim.step_count();
    std::vector<double> loss_history;
    const int64_t in_ch = mcfg.in_channels;

    std::vector<size_t> order(usable.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int64_t epoch = start_epoch; epoch < optim_cfg.epochs; ++epoch) {
        const double lr = scheduler_lr(optim_cfg, epoch);
        // Fisher-Yates off the crop stream so data order and offsets share
        // one serialized state.
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(crop_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        int64_t epoch_batches = 0;
        for (size_t pos = 0; pos < order.size(); pos += optim_cfg.batch_size) {
            const size_t bsz = std::min<size_t>(optim_cfg.batch_size, order.size() - pos);
            Tensor eeg = Tensor::zeros({static_cast<int64_t>(bsz), segment, in_ch});
            Tensor target = Tensor::zeros({static_cast<int64_t>(bsz), segment});
            std::vector<int> subject_ids(bsz);
            {
                auto ev = eeg.values_mut();
                auto tv = target.values_mut();
                for (size_t b = 0; b < bsz; ++b) {
                    const RecordingPair& rec = *usable[order[pos + b]];
                    auto [ceeg, cenv] = random_crop(rec, segment, crop_rng);
                    std::copy(ceeg.values().begin(), ceeg.values().end(),
                              ev.begin() + static_cast<int64_t>(b) * segment * in_ch);
                    std::copy(cenv.values().begin(), cenv.values().end(),
                              tv.begin() + static_cast<int64_t>(b) * segment);
                    subject_ids[b] = rec.subject_id;
                }
            }

            Tape tape;
            Tensor pred = model.forward(&tape, eeg,
                                        mcfg.use_conditioner ? &subject_ids : nullptr,
                                        /*training=*/true, &dropout_rng);
            Tensor loss = total_loss(&tape, pred, target, loss_cfg);
            const double loss_value = loss.scalar_value();
            if (!std::isfinite(loss_value)) {
                throw NumericError("non-finite loss at step " + std::to_string(optim.step_count()) +
                                   ", epoch " + std::to_string(epoch) + ", lr " +
                                   std::to_string(lr) + "; recent losses: [" +
                                   format_losses(loss_history) + "]");
            }
            loss_history.push_back(loss_value);
            epoch_loss += loss_value;
            ++epoch_batches;

            model.ensure_zero_grads();
            backward(loss, tape);
            clip_grad_norm(optim.params(), optim_cfg.grad_clip_norm);
            optim.step(lr);
        }

        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.train_loss = epoch_loss / static_cast<double>(epoch_batches);
        entry.lr = lr;
        if (!val_recs.empty() && (epoch + 1) % optim_cfg.eval_every_epochs == 0) {
            entry.val_r = evaluate_recordings(model, val_recs, segment, TailPolicy::process_short_tail)
                              .overall_mean;
        }
        result.log.push_back(entry);

        if (metrics.is_open()) {
            nlohmann::json line{{"epoch", entry.epoch},
                                {"train_loss", entry.train_loss},
                                {"val_r", entry.val_r ? nlohmann::json(*entry.val_r)
                                                      : nlohmann::json(nullptr)},
                                {"lr", entry.lr}};
            metrics << line.dump() << "\n";
            metrics.flush();
        }
        if (options.write_checkpoints) {
            result.last_checkpoint = options.out_dir / "last.ckpt";
            save_train_checkpoint(result.last_checkpoint, model, optim, epoch + 1, crop_rng,
                                  dropout_rng);
            if (entry.val_r && (!result.best_val_r || *entry.val_r > *result.best_val_r)) {
                result.best_val_r = entry.val_r;
                result.best_checkpoint = options.out_dir / "best.ckpt";
                save_model(result.best_checkpoint, model);
            }
        } else if (entry.val_r && (!result.best_val_r || *entry.val_r > *result.best_val_r)) {
            result.best_val_r = entry.val_r;
        }
    }
    result.steps = optim.step_count();
    return result;
}

} // namespace eegdec
