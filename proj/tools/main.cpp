#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eegdec/checkpoint.hpp"
#include "eegdec/data_io.hpp"
#include "eegdec/gradcheck.hpp"
#include "eegdec/inference.hpp"
#include "eegdec/model.hpp"
#include "eegdec/objective.hpp"
#include "eegdec/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 2 usage, 3 config, 4 data format, 5 numeric failure.
enum ExitCode { kOk = 0, kUsage = 2, kConfig = 3, kDataFormat = 4, kNumeric = 5 };

void print_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

// One mutable binding per flat config key, so file values, the paper
// preset and explicit flags can be layered in a fixed order.
struct RunConfig {
    eegdec::ModelConfig model;
    eegdec::OptimConfig optim;
    eegdec::LossConfig loss;

    struct Binding {
        std::string key;
        enum class Kind { i64, f64, boolean, u64 } kind;
        void* ptr;
        std::string help;
    };
    std::vector<Binding> bindings;

    RunConfig() {
        auto i64 = [&](const std::string& k, int64_t& v, const std::string& h) {
            bindings.push_back({k, Binding::Kind::i64, &v, h});
        };
        auto f64 = [&](const std::string& k, double& v, const std::string& h) {
            bindings.push_back({k, Binding::Kind::f64, &v, h});
        };
        auto bl = [&](const std::string& k, bool& v, const std::string& h) {
            bindings.push_back({k, Binding::Kind::boolean, &v, h});
        };
        auto u64 = [&](const std::string& k, uint64_t& v, const std::string& h) {
            bindings.push_back({k, Binding::Kind::u64, &v, h});
        };
        i64("model.in_channels", model.in_channels, "EEG channel count");
        i64("model.hidden_dim", model.hidden_dim, "hidden width of the block stack");
        i64("model.n_blocks", model.n_blocks, "FFT block count [paper preset: 8]");
        i64("model.n_heads", model.n_heads, "attention heads [paper preset: 2]");
        i64("model.conv_kernel_pre", model.conv_kernel_pre, "pre-conv kernel (odd)");
        i64("model.ffn_kernel", model.ffn_kernel, "block conv kernel (odd)");
        i64("model.ffn_expansion", model.ffn_expansion, "block conv width multiplier");
        f64("model.dropout_rate", model.dropout_rate, "dropout in [0,1)");
        i64("model.n_subjects", model.n_subjects, "conditioner rows; 0 = take from manifest");
        bl("model.use_conditioner", model.use_conditioner, "add subject embedding after pre-conv");
        bl("model.use_pre_ln", model.use_pre_ln, "pre-LN blocks; false = post-LN ablation");
        bl("model.use_positional_encoding", model.use_positional_encoding,
           "add sinusoidal positions after pre-conv");
        i64("model.sample_rate_hz", model.sample_rate_hz, "sample rate [paper preset: 64]");
        i64("model.segment_seconds", model.segment_seconds,
            "training crop / inference chunk length [paper preset: 5]");
        f64("optim.lr0", optim.lr0, "initial learning rate [paper preset: 0.0005]");
        f64("optim.beta1", optim.beta1, "adam beta1");
        f64("optim.beta2", optim.beta2, "adam beta2");
        f64("optim.adam_eps", optim.adam_eps, "adam epsilon");
        f64("optim.decay_factor", optim.decay_factor, "step-decay factor [paper preset: 0.9]");
        i64("optim.decay_every_epochs", optim.decay_every_epochs, "epochs per decay step");
        i64("optim.epochs", optim.epochs, "training epochs [paper preset: 1000]");
        i64("optim.batch_size", optim.batch_size, "crops per optimizer step");
        u64("optim.seed", optim.seed, "root seed for init/crop/dropout streams");
        f64("optim.grad_clip_norm", optim.grad_clip_norm, "global-norm clip; 0 = off");
        i64("optim.eval_every_epochs", optim.eval_every_epochs, "val evaluation cadence");
        f64("loss.alpha", loss.alpha, "L1 weight in -R + alpha*L1 [paper preset: 0.2]");
        bl("loss.l1_enabled", loss.l1_enabled, "false = correlation-only ablation");
        f64("loss.epsilon_denominator", loss.epsilon_denominator, "pearson denominator guard");
    }

    std::string default_str(const Binding& b) const {
        switch (b.kind) {
            case Binding::Kind::i64: return std::to_string(*static_cast<int64_t*>(b.ptr));
            case Binding::Kind::f64: {
                std::ostringstream os;
                os << *static_cast<double*>(b.ptr);
                return os.str();
            }
            case Binding::Kind::boolean: return *static_cast<bool*>(b.ptr) ? "true" : "false";
            case Binding::Kind::u64: return std::to_string(*static_cast<uint64_t*>(b.ptr));
        }
        return "";
    }

    void set_from_json(const Binding& b, const json& v) {
        try {
            switch (b.kind) {
                case Binding::Kind::i64: *static_cast<int64_t*>(b.ptr) = v.get<int64_t>(); break;
                case Binding::Kind::f64: *static_cast<double*>(b.ptr) = v.get<double>(); break;
                case Binding::Kind::boolean: *static_cast<bool*>(b.ptr) = v.get<bool>(); break;
                case Binding::Kind::u64: *static_cast<uint64_t*>(b.ptr) = v.get<uint64_t>(); break;
            }
        } catch (const json::exception& e) {
            throw eegdec::ConfigError("config key '" + b.key + "': " + e.what());
        }
    }

    void apply_preset(const std::string& name) {
        if (name.empty()) return;
        if (name != "paper") throw eegdec::ConfigError("unknown preset '" + name + "'");
        model.n_blocks = 8;
        model.n_heads = 2;
        model.sample_rate_hz = 64;
        model.segment_seconds = 5;
        model.use_conditioner = true;
        optim.lr0 = 0.0005;
        optim.decay_factor = 0.9;
        optim.epochs = 1000;
        loss.alpha = 0.2;
        loss.l1_enabled = true;
    }

    void apply_ablation(const std::string& name) {
        if (name == "no-pre-ln") {
            model.use_pre_ln = false;
        } else if (name == "no-conditioner") {
            model.use_conditioner = false;
        } else if (name == "no-l1") {
            loss.l1_enabled = false;
        } else {
            throw eegdec::ConfigError("unknown ablation '" + name +
                                      "' (expected no-pre-ln, no-conditioner or no-l1)");
        }
    }

    void apply_file(const fs::path& path, const std::vector<std::string>& cli_set) {
        std::ifstream in(path);
        if (!in) throw eegdec::ConfigError("cannot open config file " + path.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw eegdec::ConfigError("config file " + path.string() + ": " + e.what());
        }
        if (!j.is_object()) {
            throw eegdec::ConfigError("config file must be a flat JSON object of dotted keys");
        }
        for (const auto& [key, value] : j.items()) {
            bool known = false;
            for (auto& b : bindings) {
                if (b.key != key) continue;
                known = true;
                // flags beat file values
                if (std::find(cli_set.begin(), cli_set.end(), key) == cli_set.end()) {
                    set_from_json(b, value);
                }
                break;
            }
            if (!known) throw eegdec::ConfigError("unknown config key '" + key + "'");
        }
    }
};

// Registers one CLI option per binding; returns the option handles so the
// layering code can tell which flags were passed explicitly.
void add_config_options(CLI::App* cmd, RunConfig& cfg,
                        std::vector<std::pair<std::string, CLI::Option*>>& opts) {
    for (auto& b : cfg.bindings) {
        const std::string name = "--" + b.key;
        const std::string help = b.help + " (default " + cfg.default_str(b) + ")";
        CLI::Option* opt = nullptr;
        switch (b.kind) {
            case RunConfig::Binding::Kind::i64:
                opt = cmd->add_option(name, *static_cast<int64_t*>(b.ptr), help);
                break;
            case RunConfig::Binding::Kind::f64:
                opt = cmd->add_option(name, *static_cast<double*>(b.ptr), help);
                break;
            case RunConfig::Binding::Kind::boolean:
                opt = cmd->add_option(name, *static_cast<bool*>(b.ptr), help);
                break;
            case RunConfig::Binding::Kind::u64:
                opt = cmd->add_option(name, *static_cast<uint64_t*>(b.ptr), help);
                break;
        }
        opts.emplace_back(b.key, opt);
    }
}

struct ConfigLayering {
    std::string preset;
    std::string config_file;
    std::vector<std::string> ablations;
    std::vector<std::pair<std::string, CLI::Option*>> opts;

    // defaults -> preset -> file -> flags -> ablations
    void resolve(RunConfig& cfg) {
        std::vector<std::string> cli_set;
        std::vector<std::pair<std::string, std::vector<std::string>>> explicit_values;
        for (auto& [key, opt] : opts) {
            if (opt->count() > 0) {
                cli_set.push_back(key);
                explicit_values.emplace_back(key, opt->results());
            }
        }
        cfg.apply_preset(preset);
        if (!config_file.empty()) cfg.apply_file(config_file, cli_set);
        for (auto& [key, values] : explicit_values) {
            for (auto& b : cfg.bindings) {
                if (b.key != key) continue;
                // re-apply the explicit flag on top of preset/file
                for (auto& [okey, opt] : opts) {
                    if (okey == key) {
                        switch (b.kind) {
                            case RunConfig::Binding::Kind::i64:
                                *static_cast<int64_t*>(b.ptr) = std::stoll(values.back());
                                break;
                            case RunConfig::Binding::Kind::f64:
                                *static_cast<double*>(b.ptr) = std::stod(values.back());
                                break;
                            case RunConfig::Binding::Kind::boolean: {
                                std::string v = values.back();
                                std::transform(v.begin(), v.end(), v.begin(), ::tolower);
                                *static_cast<bool*>(b.ptr) =
                                    v == "1" || v == "true" || v == "on" || v == "yes";
                                break;
                            }
                            case RunConfig::Binding::Kind::u64:
                                *static_cast<uint64_t*>(b.ptr) = std::stoull(values.back());
                                break;
                        }
                    }
                }
            }
        }
        for (const auto& a : ablations) cfg.apply_ablation(a);
    }
};

void attach_layering(CLI::App* cmd, RunConfig& cfg, ConfigLayering& layering) {
    cmd->add_option("--preset", layering.preset,
                    "named preset; 'paper' pins n_blocks=8, n_heads=2, lr0=0.0005, decay 0.9, "
                    "epochs 1000, alpha=0.2, 5 s segments at 64 Hz, conditioner on");
    cmd->add_option("--config", layering.config_file,
                    "JSON config file with flat dotted keys; flags override file values");
    cmd->add_option("--ablation", layering.ablations,
                    "ablation switch: no-pre-ln, no-conditioner or no-l1 (repeatable)");
    add_config_options(cmd, cfg, layering.opts);
}

// ---- gen-data --------------------------------------------------------------

struct GenDataArgs {
    std::string out_dir;
    eegdec::SyntheticSpec spec;
    std::string splits = "train";
};

int cmd_gen_data(const GenDataArgs& args) {
    const fs::path out(args.out_dir);
    fs::create_directories(out);

    std::vector<eegdec::Split> split_cycle;
    {
        std::stringstream ss(args.splits);
        std::string tok;
        while (std::getline(ss, tok, ',')) split_cycle.push_back(eegdec::split_from_name(tok));
        if (split_cycle.empty()) throw eegdec::ConfigError("--splits must name at least one split");
    }

    const eegdec::SyntheticDataset ds = eegdec::generate_synthetic(args.spec);
    eegdec::Manifest manifest;
    std::vector<int> rec_index(args.spec.n_subjects, 0);
    for (const auto& rec : ds.recordings) {
        const int idx = rec_index[rec.subject_id]++;
        const std::string stem =
            "s" + std::to_string(rec.subject_id) + "_r" + std::to_string(idx);
        const fs::path eeg_path = out / (stem + "_eeg.eegr");
        const fs::path env_path = out / (stem + "_env.eegr");
        eegdec::write_recording(eeg_path, env_path, rec);
        manifest.entries.push_back({eeg_path.filename(), env_path.filename(), rec.subject_id,
                                    split_cycle[idx % split_cycle.size()]});
    }
    eegdec::save_manifest(out / "manifest.json", manifest);

    json echo{{"n_subjects", args.spec.n_subjects},
              {"recordings_per_subject", args.spec.recordings_per_subject},
              {"duration_seconds", args.spec.duration_seconds},
              {"channels", args.spec.channels},
              {"noise_std", args.spec.noise_std},
              {"fir_length", args.spec.fir_length},
              {"identity_mixing", args.spec.identity_mixing},
              {"sample_rate_hz", args.spec.sample_rate_hz},
              {"seed", args.spec.seed},
              {"subject_weights", ds.truth.subject_weights},
              {"subject_fir", ds.truth.subject_fir}};
    std::ofstream spec_os(out / "synth_spec.json");
    spec_os << echo.dump(2) << "\n";

    std::cout << json{{"recordings", ds.recordings.size()},
                      {"manifest", (out / "manifest.json").string()}}
                     .dump()
              << "\n";
    return kOk;
}

// ---- train -----------------------------------------------------------------

int cmd_train(RunConfig& cfg, const std::string& manifest_path, const std::string& out_dir,
              const std::string& resume) {
    const eegdec::Manifest manifest = eegdec::load_manifest(manifest_path);
    if (cfg.model.use_conditioner && cfg.model.n_subjects == 0) {
        cfg.model.n_subjects = manifest.n_subjects();
    }
    cfg.model.validate();
    cfg.optim.validate();
    cfg.loss.validate();

    eegdec::DecoderModel model(cfg.model, eegdec::Rng(cfg.optim.seed));
    eegdec::TrainOptions options;
    options.out_dir = out_dir;
    options.resume_from = resume;
    options.info = &std::cerr;
    const eegdec::TrainResult result =
        eegdec::train(model, manifest, cfg.optim, cfg.loss, options);

    json summary{{"steps", result.steps},
                 {"epochs", result.log.size()},
                 {"last_checkpoint", result.last_checkpoint.string()},
                 {"final_train_loss",
                  result.log.empty() ? json(nullptr) : json(result.log.back().train_loss)},
                 {"best_val_r", result.best_val_r ? json(*result.best_val_r) : json(nullptr)},
                 {"best_checkpoint", result.best_checkpoint.string()}};
    std::cout << summary.dump() << "\n";
    return kOk;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& split, const std::string& tail, const std::string& out_path) {
    const eegdec::DecoderModel model = eegdec::load_model(checkpoint);
    const eegdec::Manifest manifest = eegdec::load_manifest(manifest_path);
    const eegdec::TailPolicy policy = tail == "drop"
                                          ? eegdec::TailPolicy::drop_tail
                                          : eegdec::TailPolicy::process_short_tail;
    if (tail != "drop" && tail != "process") {
        throw eegdec::ConfigError("--tail must be 'process' or 'drop'");
    }
    const eegdec::EvalReport report =
        eegdec::evaluate_split(model, manifest, eegdec::split_from_name(split), policy);
    const json j = eegdec::report_to_json(report);
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw eegdec::ConfigError("cannot write report to " + out_path);
        os << j.dump(2) << "\n";
    }
    std::cout << j.dump() << "\n";
    return kOk;
}

// ---- infer -----------------------------------------------------------------

int cmd_infer(const std::string& checkpoint, const std::string& eeg_path,
              const std::string& env_out, int subject, const std::string& tail) {
    const eegdec::DecoderModel model = eegdec::load_model(checkpoint);
    const eegdec::SignalData sig = eegdec::read_signal(eeg_path);

    eegdec::RecordingPair rec;
    rec.subject_id = subject >= 0 ? subject : static_cast<int>(sig.subject_id);
    rec.sample_rate_hz = static_cast<int>(sig.sample_rate_hz);
    const int64_t channels = sig.data.shape()[0], time = sig.data.shape()[1];
    rec.eeg = eegdec::Tensor::zeros({time, channels});
    {
        auto dst = rec.eeg.values_mut();
        const auto src = sig.data.values();
        for (int64_t c = 0; c < channels; ++c) {
            for (int64_t t = 0; t < time; ++t) dst[t * channels + c] = src[c * time + t];
        }
    }
    rec.envelope = eegdec::Tensor::zeros({time}); // placeholder, not used by inference

    const eegdec::TailPolicy policy = tail == "drop"
                                          ? eegdec::TailPolicy::drop_tail
                                          : eegdec::TailPolicy::process_short_tail;
    if (tail != "drop" && tail != "process") {
        throw eegdec::ConfigError("--tail must be 'process' or 'drop'");
    }
    const eegdec::ChunkPlan plan =
        eegdec::plan_chunks(time, model.config().segment_samples(), policy);
    const eegdec::Tensor envelope = eegdec::infer_recording(model, rec, plan);

    eegdec::write_signal(env_out, static_cast<uint32_t>(rec.subject_id),
                         static_cast<uint32_t>(rec.sample_rate_hz),
                         eegdec::reshape(nullptr, envelope, {1, envelope.shape()[0]}));
    std::cout << json{{"samples", envelope.shape()[0]}, {"output", env_out}}.dump() << "\n";
    return kOk;
}

// ---- gradcheck ---------------------------------------------------------------

int cmd_gradcheck(uint64_t seed) {
    const auto rows = eegdec::run_gradient_checks(seed);
    size_t width = 0;
    for (const auto& row : rows) width = std::max(width, row.name.size());
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.3e", row.max_rel_err);
        std::cout << row.name << std::string(width - row.name.size() + 2, ' ') << buf << "  "
                  << (row.pass ? "PASS" : "FAIL") << "\n";
    }
    if (!eegdec::all_pass(rows)) {
        print_error("numeric", "gradient check failed");
        return kNumeric;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG-to-speech-envelope decoder: FFT-block regression model with subject "
                 "conditioning, correlation+L1 training and chunked inference"};
    app.require_subcommand(1);

    // gen-data
    GenDataArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic EEG/envelope dataset");
    gen->add_option("--out", gen_args.out_dir, "output directory")->required();
    gen->add_option("--subjects", gen_args.spec.n_subjects, "subject count (default 4)");
    gen->add_option("--recordings", gen_args.spec.recordings_per_subject,
                    "recordings per subject (default 2)");
    gen->add_option("--seconds", gen_args.spec.duration_seconds,
                    "recording duration in seconds (default 60)");
    gen->add_option("--channels", gen_args.spec.channels, "EEG channels (default 64)");
    gen->add_option("--noise-std", gen_args.spec.noise_std, "channel noise sigma (default 0.1)");
    gen->add_option("--seed", gen_args.spec.seed, "generator seed (default 0)");
    gen->add_option("--sample-rate", gen_args.spec.sample_rate_hz, "sample rate (default 64)");
    gen->add_flag("--identity-mixing", gen_args.spec.identity_mixing,
                  "all weights 1, unit FIR: every channel equals the envelope");
    gen->add_option("--splits", gen_args.splits,
                    "comma list cycled over each subject's recordings (default 'train')");

    // train
    RunConfig train_cfg;
    ConfigLayering train_layering;
    std::string train_manifest, train_out, train_resume;
    CLI::App* train = app.add_subcommand("train", "train a decoder on a manifest");
    train->add_option("--manifest", train_manifest, "dataset manifest JSON")->required();
    train->add_option("--out", train_out, "output directory for checkpoints and metrics")
        ->required();
    train->add_option("--resume", train_resume, "training checkpoint to resume from");
    attach_layering(train, train_cfg, train_layering);

    // eval
    std::string eval_ckpt, eval_manifest, eval_split = "test", eval_tail = "process", eval_out;
    CLI::App* eval = app.add_subcommand("eval", "per-subject Pearson report for a split");
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--manifest", eval_manifest, "dataset manifest JSON")->required();
    eval->add_option("--split", eval_split, "train, val or test (default test)");
    eval->add_option("--tail", eval_tail, "short-tail policy: process or drop (default process)");
    eval->add_option("--out", eval_out, "also write the report JSON here");

    // infer
    std::string infer_ckpt, infer_eeg, infer_out, infer_tail = "process";
    int infer_subject = -1;
    CLI::App* infer = app.add_subcommand("infer", "predict an envelope for one EEG file");
    infer->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
    infer->add_option("--eeg", infer_eeg, "input EEGR file")->required();
    infer->add_option("--out", infer_out, "output envelope EEGR file")->required();
    infer->add_option("--subject", infer_subject,
                      "subject id override (default: id stored in the EEG file)");
    infer->add_option("--tail", infer_tail, "short-tail policy: process or drop");

    // gradcheck
    uint64_t gradcheck_seed = 42;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of every layer and a full model");
    gradcheck->add_option("--seed", gradcheck_seed, "input randomization seed (default 42)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return kUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (train->parsed()) {
            train_layering.resolve(train_cfg);
            return cmd_train(train_cfg, train_manifest, train_out, train_resume);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_ckpt, eval_manifest, eval_split, eval_tail, eval_out);
        }
        if (infer->parsed()) {
            return cmd_infer(infer_ckpt, infer_eeg, infer_out, infer_subject, infer_tail);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_seed);
    } catch (const eegdec::NumericError& e) {
        print_error("numeric", e.what());
        return kNumeric;
    } catch (const eegdec::FormatError& e) {
        print_error("data-format", e.what());
        return kDataFormat;
    } catch (const eegdec::TooShortError& e) {
        print_error("data-format", e.what());
        return kDataFormat;
    } catch (const eegdec::DimError& e) {
        print_error("data-format", e.what());
        return kDataFormat;
    } catch (const eegdec::ConfigError& e) {
        print_error("config", e.what());
        return kConfig;
    } catch (const eegdec::SubjectError& e) {
        print_error("config", e.what());
        return kConfig;
    } catch (const std::exception& e) {
        print_error("config", e.what());
        return kConfig;
    }
    return kOk;
}
