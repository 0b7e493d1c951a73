#pragma once

// Order-sensitive synthetic video-feature benchmark. Classes are short
// ordered event strings over a small prototype alphabet; grammars containing
// permutation-pair classes (same events, different order) provably cap any
// order-blind classifier, which is what makes the temporal block measurable
// at this scale.

#include <cstdint>
#include <string>
#include <vector>

#include "trg/model.hpp"
#include "trg/rng.hpp"

namespace trg {

struct EventGrammar {
    int prototype_count = 3;
    // Event strings like "A,B". Letters index prototypes in order.
    std::vector<std::string> class_strings = {"A,B", "B,A", "A,C", "C,A", "B,B", "C,C"};
    double noise_sigma = 0.25;
    int frames_per_event = 8;
    int raw_frames = 16;
    int in_channels = 3;
    int in_height = 16;
    int in_width = 16;
    LabelMode label_mode = LabelMode::Single;

    // One flat C_in*H_in*W_in pattern per prototype; filled by
    // build_prototypes (deterministic in the seed).
    std::vector<std::vector<float>> prototypes;

    long frame_elems() const {
        return static_cast<long>(in_channels) * in_height * in_width;
    }
    int class_count() const { return static_cast<int>(class_strings.size()); }
    // TRGD stores one label column per class (single) or per prototype (multi).
    int label_count() const {
        return label_mode == LabelMode::Single ? class_count() : prototype_count;
    }

    std::vector<std::vector<int>> parsed_classes() const;
    void build_prototypes(uint64_t seed);

    // Checks grammar consistency, the permutation-pair requirement, and the
    // prototype separation bound min pairwise L2 > 4*sigma*sqrt(elems).
    void validate() const;
};

struct SyntheticSample {
    uint64_t seed = 0;
    uint32_t label = 0;               // single-label class id
    std::vector<uint8_t> multi;       // multi-label bits (prototype presence)
    std::vector<float> frames;        // raw_frames x C x H x W
};

struct Dataset {
    int raw_frames = 0;
    int in_channels = 0, in_height = 0, in_width = 0;
    int class_count = 0;
    LabelMode label_mode = LabelMode::Single;
    std::vector<SyntheticSample> samples;

    long frame_elems() const {
        return static_cast<long>(in_channels) * in_height * in_width;
    }
    bool operator==(const Dataset& o) const;
};

// Deterministic in (grammar, count, seed) and in the worker count: every
// sample derives its own seed from its index. Classes balanced to within one
// sample.
Dataset generate(const EventGrammar& grammar, int count, uint64_t seed, int workers = 1);

enum class SamplingMode { Sparse, Dense };

inline std::string to_string(SamplingMode m) {
    return m == SamplingMode::Sparse ? "sparse" : "dense";
}

// Frame-index selection for one clip. Sparse mode spreads `frames` segments
// over the whole clip (training jitters inside each segment, evaluation takes
// deterministic positions); dense mode takes a contiguous strided window
// (training picks a random start, evaluation centers it). Multi-clip
// evaluation spreads clip positions via (clip_index + 0.5) / clip_count.
std::vector<int> sample_indices(SamplingMode mode, int raw_frames, int frames, int stride,
                                bool train, rng::Stream* jitter, int clip_index = 0,
                                int clip_count = 1);

// Gathers the selected frames into a contiguous T x C x H x W buffer.
std::vector<float> gather_frames(const Dataset& ds, const SyntheticSample& sample,
                                 const std::vector<int>& indices);

// TRGD container (exact round trip).
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace trg
