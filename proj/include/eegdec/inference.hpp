#pragma once

#include <functional>
#include <vector>

#include "eegdec/data_io.hpp"
#include "eegdec/model.hpp"
#include "eegdec/objective.hpp"

namespace eegdec {

enum class TailPolicy { process_short_tail, drop_tail };

// Contiguous non-overlapping chunks from offset 0; a final short chunk is
// kept only under process_short_tail and only when it has >= 2 samples.
struct ChunkPlan {
    int64_t chunk_samples = 0;
    std::vector<int64_t> offsets;
    std::vector<int64_t> lengths;
    TailPolicy policy = TailPolicy::process_short_tail;

    int64_t covered() const {
        int64_t total = 0;
        for (int64_t len : lengths) total += len;
        return total;
    }
};

ChunkPlan plan_chunks(int64_t total_samples, int64_t chunk_samples, TailPolicy policy);

// Whole-recording prediction for one EEG chunk: [time, channels] -> [time].
using ChunkPredictor = std::function<Tensor(const Tensor& eeg_chunk, int subject_id)>;

ChunkPredictor model_predictor(const DecoderModel& model);

// Per-chunk prediction concatenated in offset order over the plan.
Tensor infer_recording(const ChunkPredictor& predict, const RecordingPair& rec,
                       const ChunkPlan& plan);
Tensor infer_recording(const DecoderModel& model, const RecordingPair& rec, const ChunkPlan& plan);

// One Pearson r per recording between the chunk-concatenated prediction and
// the true envelope over the covered region, aggregated per subject.
EvalReport evaluate_recordings(const ChunkPredictor& predict,
                               const std::vector<RecordingPair>& recordings,
                               int64_t chunk_samples, TailPolicy policy);
EvalReport evaluate_recordings(const DecoderModel& model,
                               const std::vector<RecordingPair>& recordings,
                               int64_t chunk_samples, TailPolicy policy);
EvalReport evaluate_split(const DecoderModel& model, const Manifest& manifest, Split split,
                          TailPolicy policy = TailPolicy::process_short_tail);

} // namespace eegdec
