#include "eegdec/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace eegdec {

namespace {

constexpr char kMagic[4] = {'E', 'E', 'G', 'R'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

uint32_t get_u32(const unsigned char* b) {
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

} // namespace

void write_signal(const std::filesystem::path& path, uint32_t subject_id, uint32_t sample_rate_hz,
                  const Tensor& channels_by_samples) {
    if (channels_by_samples.rank() != 2) {
        throw DimError("write_signal expects [channels, samples], got " +
                       shape_str(channels_by_samples.shape()));
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, subject_id);
    put_u32(os, sample_rate_hz);
    put_u32(os, static_cast<uint32_t>(channels_by_samples.shape()[0]));
    put_u32(os, static_cast<uint32_t>(channels_by_samples.shape()[1]));
    for (double v : channels_by_samples.values()) put_f32(os, static_cast<float>(v));
    if (!os) throw FormatError("write failure on " + path.string());
}

SignalData read_signal(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open signal file " + path.string());

    unsigned char header[24];
    in.read(reinterpret_cast<char*>(header), 24);
    if (in.gcount() != 24) {
        throw FormatError(path.string() + ": truncated header, " + std::to_string(in.gcount()) +
                          " of 24 bytes at byte offset 0");
    }
    if (std::memcmp(header, kMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic at byte offset 0");
    }
    const uint32_t version = get_u32(header + 4);
    if (version != kVersion) {
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    }
    SignalData sig;
    sig.subject_id = get_u32(header + 8);
    sig.sample_rate_hz = get_u32(header + 12);
    const uint32_t n_channels = get_u32(header + 16);
    const uint32_t n_samples = get_u32(header + 20);
    if (n_channels == 0 || n_samples == 0) {
        throw FormatError(path.string() + ": zero extent in header at byte offset 16");
    }

    const uint64_t count = static_cast<uint64_t>(n_channels) * n_samples;
    std::vector<unsigned char> payload(count * 4);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<uint64_t>(in.gcount()) != payload.size()) {
        throw FormatError(path.string() + ": truncated payload, expected " +
                          std::to_string(payload.size()) + " bytes, got " +
                          std::to_string(in.gcount()) + " at byte offset 24");
    }
    std::vector<double> values(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t bits = get_u32(payload.data() + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        values[i] = static_cast<double>(f);
    }
    sig.data = Tensor::from_values({n_channels, n_samples}, std::move(values));
    return sig;
}

void write_recording(const std::filesystem::path& eeg_path,
                     const std::filesystem::path& envelope_path, const RecordingPair& rec) {
    if (rec.eeg.rank() != 2 || rec.envelope.rank() != 1 ||
        rec.eeg.shape()[0] != rec.envelope.shape()[0]) {
        throw DimError("recording EEG " + shape_str(rec.eeg.shape()) + " and envelope " +
                       shape_str(rec.envelope.shape()) + " are not time-aligned");
    }
    // [time, channels] -> channel-major
    const int64_t time = rec.eeg.shape()[0], channels = rec.eeg.shape()[1];
    Tensor by_channel = Tensor::zeros({channels, time});
    {
        auto dst = by_channel.values_mut();
        const auto src = rec.eeg.values();
        for (int64_t t = 0; t < time; ++t) {
            for (int64_t c = 0; c < channels; ++c) dst[c * time + t] = src[t * channels + c];
        }
    }
    write_signal(eeg_path, static_cast<uint32_t>(rec.subject_id),
                 static_cast<uint32_t>(rec.sample_rate_hz), by_channel);
    write_signal(envelope_path, static_cast<uint32_t>(rec.subject_id),
                 static_cast<uint32_t>(rec.sample_rate_hz),
                 Tensor::from_values({1, time}, std::vector<double>(rec.envelope.values().begin(),
                                                                    rec.envelope.values().end())));
}

RecordingPair read_recording(const std::filesystem::path& eeg_path,
                             const std::filesystem::path& envelope_path) {
    SignalData eeg = read_signal(eeg_path);
    SignalData env = read_signal(envelope_path);
    if (env.data.shape()[0] != 1) {
        throw FormatError(envelope_path.string() + ": envelope must have exactly one channel");
    }
    if (eeg.data.shape()[1] != env.data.shape()[1]) {
        throw FormatError("EEG " + eeg_path.string() + " and envelope " + envelope_path.string() +
                          " sample counts differ");
    }
    if (eeg.subject_id != env.subject_id || eeg.sample_rate_hz != env.sample_rate_hz) {
        throw FormatError("EEG " + eeg_path.string() + " and envelope " + envelope_path.string() +
                          " disagree on subject or sample rate");
    }
    RecordingPair rec;
    rec.subject_id = static_cast<int>(eeg.subject_id);
    rec.sample_rate_hz = static_cast<int>(eeg.sample_rate_hz);
    const int64_t channels = eeg.data.shape()[0], time = eeg.data.shape()[1];
    rec.eeg = Tensor::zeros({time, channels});
    {
        auto dst = rec.eeg.values_mut();
        const auto src = eeg.data.values();
        for (int64_t c = 0; c < channels; ++c) {
            for (int64_t t = 0; t < time; ++t) dst[t * channels + c] = src[c * time + t];
        }
    }
    rec.envelope = Tensor::from_values(
        {time}, std::vector<double>(env.data.values().begin(), env.data.values().end()));
    return rec;
}

// ---- manifest ------------------------------------------------------------------

std::string split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw ContractError("invalid split value");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw FormatError("unknown split '" + name + "' (expected train, val or test)");
}

int Manifest::n_subjects() const {
    int max_id = -1;
    for (const auto& e : entries) max_id = std::max(max_id, e.subject_id);
    return max_id + 1;
}

std::vector<ManifestEntry> Manifest::split_entries(Split split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (e.split == split) out.push_back(e);
    }
    return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest " + path.string() + ": bad JSON: " + e.what());
    }
    if (!j.is_array()) throw FormatError("manifest " + path.string() + " must be a JSON array");

    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    Manifest manifest;
    std::vector<bool> seen;
    for (const auto& item : j) {
        ManifestEntry entry;
        try {
            entry.eeg_path = resolve(item.at("eeg_path").get<std::string>());
            entry.envelope_path = resolve(item.at("envelope_path").get<std::string>());
            entry.subject_id = item.at("subject_id").get<int>();
            entry.split = split_from_name(item.at("split").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest " + path.string() + ": bad entry: " + e.what());
        }
        if (entry.subject_id < 0) {
            throw FormatError("manifest " + path.string() + ": negative subject id");
        }
        for (const auto& fp : {entry.eeg_path, entry.envelope_path}) {
            if (!std::filesystem::exists(fp)) {
                throw FormatError("manifest " + path.string() + " references missing file " +
                                  fp.string());
            }
        }
        if (static_cast<size_t>(entry.subject_id) >= seen.size()) {
            seen.resize(entry.subject_id + 1, false);
        }
        seen[entry.subject_id] = true;
        manifest.entries.push_back(std::move(entry));
    }
    for (size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) {
            throw FormatError("manifest " + path.string() + ": subject ids are not dense, " +
                              std::to_string(i) + " missing");
        }
    }
    return manifest;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        j.push_back({{"eeg_path", e.eeg_path.string()},
                     {"envelope_path", e.envelope_path.string()},
                     {"subject_id", e.subject_id},
                     {"split", split_name(e.split)}});
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << "\n";
}

std::vector<RecordingPair> load_split(const Manifest& manifest, Split split) {
    std::vector<RecordingPair> out;
    for (const auto& e : manifest.split_entries(split)) {
        RecordingPair rec = read_recording(e.eeg_path, e.envelope_path);
        rec.subject_id = e.subject_id; // manifest is authoritative
        out.push_back(std::move(rec));
    }
    return out;
}

// ---- cropping ------------------------------------------------------------------

std::pair<Tensor, Tensor> random_crop(const RecordingPair& rec, int64_t segment_samples, Rng& rng) {
    const int64_t time = rec.samples();
    if (segment_samples < 1) throw ContractError("segment_samples must be >= 1");
    if (time < segment_samples) {
        throw TooShortError("recording of " + std::to_string(time) +
                            " samples is shorter than segment of " +
                            std::to_string(segment_samples));
    }
    const int64_t offset = rng.uniform_int(0, time - segment_samples);
    const int64_t channels = rec.channels();

    Tensor eeg = Tensor::zeros({segment_samples, channels});
    std::copy(rec.eeg.values().begin() + offset * channels,
              rec.eeg.values().begin() + (offset + segment_samples) * channels,
              eeg.values_mut().begin());
    Tensor env = Tensor::zeros({segment_samples});
    std::copy(rec.envelope.values().begin() + offset,
              rec.envelope.values().begin() + offset + segment_samples,
              env.values_mut().begin());
    return {std::move(eeg), std::move(env)};
}

// ---- synthetic generator ----------------------------------------------------------

void SyntheticSpec::validate() const {
    if (n_subjects < 1) throw ConfigError("synthetic: n_subjects must be >= 1");
    if (recordings_per_subject < 1) throw ConfigError("synthetic: recordings_per_subject >= 1");
    if (duration_seconds <= 0.0) throw ConfigError("synthetic: duration must be positive");
    if (channels < 1) throw ConfigError("synthetic: channels must be >= 1");
    if (noise_std < 0.0) throw ConfigError("synthetic: noise_std must be >= 0");
    if (fir_length < 1) throw ConfigError("synthetic: fir_length must be >= 1");
    if (sample_rate_hz < 1) throw ConfigError("synthetic: sample_rate_hz must be >= 1");
}

namespace {

// Envelope character: rectified white noise smoothed by a short causal
// boxcar, so it stays positive and band-limited.
constexpr int kEnvelopeSmoothLen = 8;

std::vector<double> make_envelope(int64_t time, Rng& rng) {
    std::vector<double> white(static_cast<size_t>(time));
    for (auto& v : white) v = std::abs(rng.normal());
    std::vector<double> env(static_cast<size_t>(time));
    double acc = 0.0;
    for (int64_t t = 0; t < time; ++t) {
        acc += white[t];
        if (t >= kEnvelopeSmoothLen) acc -= white[t - kEnvelopeSmoothLen];
        env[t] = acc / static_cast<double>(std::min<int64_t>(t + 1, kEnvelopeSmoothLen));
    }
    return env;
}

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

} // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticDataset ds;
    Rng data_rng = Rng(spec.seed).substream("data");

    // Shared channel weighting with small per-subject jitter: subject
    // identity is carried by the per-subject FIR (a subject-specific delay
    // and shape), not by the mixing pattern.
    std::vector<double> base_weights(static_cast<size_t>(spec.channels));
    Rng base_rng = data_rng.substream("weights");
    for (auto& w : base_weights) w = 0.5 + base_rng.uniform();

    ds.truth.subject_weights.resize(spec.n_subjects);
    ds.truth.subject_fir.resize(spec.n_subjects);
    for (int s = 0; s < spec.n_subjects; ++s) {
        Rng srng = data_rng.substream("subject" + std::to_string(s));
        auto& weights = ds.truth.subject_weights[s];
        auto& fir = ds.truth.subject_fir[s];
        weights.assign(static_cast<size_t>(spec.channels), 1.0);
        fir.assign(static_cast<size_t>(spec.fir_length), 0.0);
        if (spec.identity_mixing) {
            fir[0] = 1.0;
        } else {
            for (int c = 0; c < spec.channels; ++c) {
                weights[c] = base_weights[c] + 0.05 * srng.normal();
            }
            const int max_delay = std::max(0, spec.fir_length - 2);
            const int delay = max_delay > 0 ? (2 * s) % (max_delay + 1) : 0;
            const double a = 0.55 + 0.3 * srng.uniform();
            fir[delay] = a;
            if (delay + 1 < spec.fir_length) {
                fir[delay + 1] = 1.0 - a;
            }
        }

        const int64_t time =
            static_cast<int64_t>(std::llround(spec.duration_seconds * spec.sample_rate_hz));
        for (int rec_idx = 0; rec_idx < spec.recordings_per_subject; ++rec_idx) {
            Rng rrng = srng.substream("rec" + std::to_string(rec_idx));
            std::vector<double> env = make_envelope(time, rrng);

            std::vector<double> filtered(static_cast<size_t>(time), 0.0);
            for (int64_t t = 0; t < time; ++t) {
                double acc = 0.0;
                for (int k = 0; k < spec.fir_length && k <= t; ++k) acc += fir[k] * env[t - k];
                filtered[t] = acc;
            }

            RecordingPair rec;
            rec.subject_id = s;
            rec.sample_rate_hz = spec.sample_rate_hz;
            rec.eeg = Tensor::zeros({time, spec.channels});
            auto ev = rec.eeg.values_mut();
            for (int64_t t = 0; t < time; ++t) {
                for (int c = 0; c < spec.channels; ++c) {
                    ev[t * spec.channels + c] = quantize_f32(
                        weights[c] * filtered[t] +
                        (spec.noise_std > 0.0 ? spec.noise_std * rrng.normal() : 0.0));
                }
            }
            std::vector<double> env_q(env.size());
            for (size_t i = 0; i < env.size(); ++i) env_q[i] = quantize_f32(env[i]);
            rec.envelope = Tensor::from_values({time}, std::move(env_q));
            ds.recordings.push_back(std::move(rec));
        }
    }
    return ds;
}

} // namespace eegdec
