#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegdec/model.hpp"
#include "eegdec/tensor.hpp"

namespace eegdec {

// Keyed tensor container behind the "EDCK\x01" header: a JSON metadata
// blob (model config plus optional training state) followed by named
// shape-tagged float64 little-endian payloads.
struct Checkpoint {
    struct Entry {
        std::string name;
        Shape shape;
        std::vector<double> data;
    };

    nlohmann::json meta;
    std::vector<Entry> entries;

    void add(const std::string& name, const Tensor& t);
    const Entry* find(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

// Model-only checkpoint: config under meta["config"], one entry per
// parameter path.
void save_model(const std::filesystem::path& path, const DecoderModel& model);
DecoderModel load_model(const std::filesystem::path& path);

// Rebuilds a model from an already-loaded container (shared by training
// resume, which stores optimizer entries alongside).
DecoderModel model_from_checkpoint(const Checkpoint& ckpt);

} // namespace eegdec
