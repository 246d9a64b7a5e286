#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eegdec/rng.hpp"
#include "eegdec/tensor.hpp"

namespace eegdec {

// One EEG recording with its aligned speech envelope.
struct RecordingPair {
    int subject_id = 0;
    Tensor eeg;      // [time, channels]
    Tensor envelope; // [time]
    int sample_rate_hz = 64;

    int64_t samples() const { return envelope.shape()[0]; }
    int64_t channels() const { return eeg.shape()[1]; }
};

// "EEGR" container: one channels-by-samples float32 array per file,
// little-endian, channel-major payload. Envelope files carry one channel.
void write_signal(const std::filesystem::path& path, uint32_t subject_id, uint32_t sample_rate_hz,
                  const Tensor& channels_by_samples);

struct SignalData {
    uint32_t subject_id = 0;
    uint32_t sample_rate_hz = 0;
    Tensor data; // [channels, samples]
};

SignalData read_signal(const std::filesystem::path& path);

// A recording round-trips as an EEG file plus an envelope file.
void write_recording(const std::filesystem::path& eeg_path,
                     const std::filesystem::path& envelope_path, const RecordingPair& rec);
RecordingPair read_recording(const std::filesystem::path& eeg_path,
                             const std::filesystem::path& envelope_path);

enum class Split { train, val, test };

std::string split_name(Split split);
Split split_from_name(const std::string& name);

struct ManifestEntry {
    std::filesystem::path eeg_path;
    std::filesystem::path envelope_path;
    int subject_id = 0;
    Split split = Split::train;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    int n_subjects() const;
    std::vector<ManifestEntry> split_entries(Split split) const;
};

// JSON array of {eeg_path, envelope_path, subject_id, split}; relative
// paths resolve against the manifest's directory on load.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

std::vector<RecordingPair> load_split(const Manifest& manifest, Split split);

// EEG and envelope cropped at one shared uniformly-random offset.
std::pair<Tensor, Tensor> random_crop(const RecordingPair& rec, int64_t segment_samples, Rng& rng);

// Synthetic EEG built the inverse way round: a positive band-limited
// envelope drives per-subject FIR-filtered channel mixtures plus noise.
// identity_mixing pins weights to 1 and the FIR to a unit tap so each
// channel equals the envelope exactly (plus noise).
struct SyntheticSpec {
    int n_subjects = 4;
    int recordings_per_subject = 2;
    double duration_seconds = 60.0;
    int channels = 64;
    double noise_std = 0.1;
    int fir_length = 8;
    bool identity_mixing = false;
    int sample_rate_hz = 64;
    uint64_t seed = 0;

    void validate() const;
};

struct SyntheticGroundTruth {
    std::vector<std::vector<double>> subject_weights; // [n_subjects][channels]
    std::vector<std::vector<double>> subject_fir;     // [n_subjects][fir_length]
};

struct SyntheticDataset {
    std::vector<RecordingPair> recordings; // grouped by subject, recording order
    SyntheticGroundTruth truth;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

} // namespace eegdec
