#include "eegdec/inference.hpp"

#include <algorithm>

namespace eegdec {

ChunkPlan plan_chunks(int64_t total_samples, int64_t chunk_samples, TailPolicy policy) {
    if (chunk_samples < 2) throw ContractError("chunk_samples must be >= 2");
    if (total_samples < 2) {
        throw TooShortError("signal of " + std::to_string(total_samples) +
                            " samples is too short to chunk");
    }
    ChunkPlan plan;
    plan.chunk_samples = chunk_samples;
    plan.policy = policy;
    int64_t offset = 0;
    while (offset + chunk_samples <= total_samples) {
        plan.offsets.push_back(offset);
        plan.lengths.push_back(chunk_samples);
        offset += chunk_samples;
    }
    const int64_t tail = total_samples - offset;
    if (policy == TailPolicy::process_short_tail && tail >= 2) {
        plan.offsets.push_back(offset);
        plan.lengths.push_back(tail);
    }
    if (plan.offsets.empty()) {
        throw TooShortError("no usable chunks: signal of " + std::to_string(total_samples) +
                            " samples vs chunk of " + std::to_string(chunk_samples));
    }
    return plan;
}

ChunkPredictor model_predictor(const DecoderModel& model) {
    return [&model](const Tensor& eeg_chunk, int subject_id) {
        const int64_t time = eeg_chunk.shape()[0], channels = eeg_chunk.shape()[1];
        Tensor batched = reshape(nullptr, eeg_chunk, {1, time, channels});
        std::vector<int> ids{subject_id};
        Tensor out = model.forward(nullptr, batched,
                                   model.config().use_conditioner ? &ids : nullptr,
                                   /*training=*/false, nullptr);
        return reshape(nullptr, out, {time});
    };
}

Tensor infer_recording(const ChunkPredictor& predict, const RecordingPair& rec,
                       const ChunkPlan& plan) {
    if (plan.offsets.empty()) throw ContractError("infer_recording: empty chunk plan");
    const int64_t channels = rec.channels();
    Tensor out = Tensor::zeros({plan.covered()});
    auto ov = out.values_mut();
    int64_t written = 0;
    for (size_t i = 0; i < plan.offsets.size(); ++i) {
        const int64_t off = plan.offsets[i], len = plan.lengths[i];
        if (off + len > rec.samples()) {
            throw ContractError("chunk plan exceeds recording length");
        }
        Tensor chunk = Tensor::zeros({len, channels});
        std::copy(rec.eeg.values().begin() + off * channels,
                  rec.eeg.values().begin() + (off + len) * channels, chunk.values_mut().begin());
        Tensor pred = predict(chunk, rec.subject_id);
        if (pred.rank() != 1 || pred.shape()[0] != len) {
            throw DimError("chunk prediction shape " + shape_str(pred.shape()) +
                           " does not match chunk length " + std::to_string(len));
        }
        std::copy(pred.values().begin(), pred.values().end(), ov.begin() + written);
        written += len;
    }
    return out;
}

Tensor infer_recording(const DecoderModel& model, const RecordingPair& rec, const ChunkPlan& plan) {
    return infer_recording(model_predictor(model), rec, plan);
}

EvalReport evaluate_recordings(const ChunkPredictor& predict,
                               const std::vector<RecordingPair>& recordings,
                               int64_t chunk_samples, TailPolicy policy) {
    if (recordings.empty()) throw ContractError("evaluate: no recordings given");
    std::vector<std::pair<int, double>> per_recording;
    per_recording.reserve(recordings.size());
    for (const auto& rec : recordings) {
        const ChunkPlan plan = plan_chunks(rec.samples(), chunk_samples, policy);
        Tensor pred = infer_recording(predict, rec, plan);
        const int64_t covered = plan.covered();
        Tensor truth = Tensor::zeros({covered});
        std::copy(rec.envelope.values().begin(), rec.envelope.values().begin() + covered,
                  truth.values_mut().begin());
        per_recording.emplace_back(rec.subject_id,
                                   pearson_r(nullptr, pred, truth).scalar_value());
    }
    return aggregate_report(per_recording);
}

EvalReport evaluate_recordings(const DecoderModel& model,
                               const std::vector<RecordingPair>& recordings,
                               int64_t chunk_samples, TailPolicy policy) {
    return evaluate_recordings(model_predictor(model), recordings, chunk_samples, policy);
}

EvalReport evaluate_split(const DecoderModel& model, const Manifest& manifest, Split split,
                          TailPolicy policy) {
    const auto recordings = load_split(manifest, split);
    if (recordings.empty()) {
        throw ContractError("evaluate_split: split '" + split_name(split) + "' is empty");
    }
    return evaluate_recordings(model, recordings, model.config().segment_samples(), policy);
}

} // namespace eegdec
