#include "trg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "binio.hpp"

namespace trg {

namespace {
constexpr char kMagic[4] = {'T', 'R', 'G', 'D'};
constexpr uint32_t kVersion = 1;
}  // namespace

std::vector<std::vector<int>> EventGrammar::parsed_classes() const {
    std::vector<std::vector<int>> out;
    out.reserve(class_strings.size());
    for (const auto& s : class_strings) {
        std::vector<int> events;
        size_t i = 0;
        while (i < s.size()) {
            const char c = s[i];
            if (c == ',' || c == ' ') {
                ++i;
                continue;
            }
            if (c < 'A' || c >= 'A' + prototype_count)
                throw DataError("grammar: event '" + std::string(1, c) + "' in class \"" + s +
                                "\" is outside the " + std::to_string(prototype_count) +
                                "-prototype alphabet");
            events.push_back(c - 'A');
            ++i;
        }
        if (events.empty()) throw DataError("grammar: class \"" + s + "\" has no events");
        out.push_back(std::move(events));
    }
    return out;
}

void EventGrammar::build_prototypes(uint64_t seed) {
    prototypes.assign(prototype_count, {});
    const uint64_t root = rng::derive(seed, "prototypes");
    for (int p = 0; p < prototype_count; ++p) {
        rng::Stream s(rng::derive(root, static_cast<uint64_t>(p)));
        auto& proto = prototypes[p];
        proto.resize(frame_elems());
        for (auto& v : proto) v = s.uniform() < 0.5 ? -1.0f : 1.0f;
    }
}

void EventGrammar::validate() const {
    if (prototype_count < 1) throw DataError("grammar: needs at least one prototype");
    if (prototype_count > 26) throw DataError("grammar: alphabet limited to A..Z");
    if (class_strings.empty()) throw DataError("grammar: needs at least one class");
    if (noise_sigma < 0) throw DataError("grammar: noise sigma must be >= 0");
    if (frames_per_event < 1 || raw_frames < 1)
        throw DataError("grammar: frames_per_event and raw_frames must be positive");
    const auto classes = parsed_classes();
    const int slots = raw_frames / frames_per_event;
    for (size_t k = 0; k < classes.size(); ++k)
        if (static_cast<int>(classes[k].size()) > slots)
            throw DataError("grammar: class \"" + class_strings[k] + "\" has " +
                            std::to_string(classes[k].size()) + " events but only " +
                            std::to_string(slots) + " slots fit in " +
                            std::to_string(raw_frames) + " frames at " +
                            std::to_string(frames_per_event) + " frames per event");

    // at least one pair of classes that are permutations of each other
    bool have_pair = false;
    for (size_t a = 0; a < classes.size() && !have_pair; ++a)
        for (size_t b = a + 1; b < classes.size() && !have_pair; ++b) {
            if (classes[a] == classes[b])
                throw DataError("grammar: classes \"" + class_strings[a] + "\" and \"" +
                                class_strings[b] + "\" are identical");
            auto ma = classes[a], mb = classes[b];
            std::sort(ma.begin(), ma.end());
            std::sort(mb.begin(), mb.end());
            if (ma == mb) have_pair = true;
        }
    if (!have_pair)
        throw DataError(
            "grammar: no permutation-pair classes; the task would not require temporal order");

    if (!prototypes.empty()) {
        if (static_cast<int>(prototypes.size()) != prototype_count)
            throw DataError("grammar: prototype list does not match prototype_count");
        const double bound = 4.0 * noise_sigma * std::sqrt(static_cast<double>(frame_elems()));
        for (size_t a = 0; a < prototypes.size(); ++a)
            for (size_t b = a + 1; b < prototypes.size(); ++b) {
                double d2 = 0.0;
                for (long i = 0; i < frame_elems(); ++i) {
                    const double d = prototypes[a][i] - prototypes[b][i];
                    d2 += d * d;
                }
                if (std::sqrt(d2) <= bound)
                    throw DataError("grammar: prototypes " + std::to_string(a) + " and " +
                                    std::to_string(b) + " are too close (L2 " +
                                    std::to_string(std::sqrt(d2)) + " <= " + std::to_string(bound) +
                                    ") to survive the noise level");
            }
    }
}

namespace {

SyntheticSample render_sample(const EventGrammar& g, const std::vector<std::vector<int>>& classes,
                              int class_id, uint64_t sample_seed) {
    SyntheticSample s;
    s.seed = sample_seed;
    const auto& events = classes[class_id];
    if (g.label_mode == LabelMode::Multi) {
        // the label is the prototype-presence vector; the class id stays internal
        s.multi.assign(g.prototype_count, 0);
        for (int e : events) s.multi[e] = 1;
    } else {
        s.label = static_cast<uint32_t>(class_id);
    }
    const long elems = g.frame_elems();
    s.frames.resize(static_cast<size_t>(g.raw_frames) * elems);
    rng::Stream noise(rng::derive(sample_seed, "noise"));
    for (int f = 0; f < g.raw_frames; ++f) {
        // frames beyond the event string hold the last event's pattern
        const size_t slot = std::min<size_t>(f / g.frames_per_event, events.size() - 1);
        const auto& proto = g.prototypes[events[slot]];
        float* dst = s.frames.data() + static_cast<size_t>(f) * elems;
        for (long i = 0; i < elems; ++i)
            dst[i] = proto[i] + static_cast<float>(g.noise_sigma * noise.normal());
    }
    return s;
}

}  // namespace

Dataset generate(const EventGrammar& grammar, int count, uint64_t seed, int workers) {
    EventGrammar g = grammar;
    if (g.prototypes.empty()) g.build_prototypes(seed);
    g.validate();
    if (count < 0) throw DataError("generate: count must be >= 0");
    const auto classes = g.parsed_classes();
    const int K = g.class_count();

    Dataset ds;
    ds.raw_frames = g.raw_frames;
    ds.in_channels = g.in_channels;
    ds.in_height = g.in_height;
    ds.in_width = g.in_width;
    ds.class_count = g.label_count();
    ds.label_mode = g.label_mode;
    ds.samples.resize(count);

    const uint64_t data_seed = rng::derive(seed, "data");
    auto fill = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i)
            ds.samples[i] = render_sample(g, classes, i % K, rng::derive(data_seed, static_cast<uint64_t>(i)));
    };
    workers = std::max(1, workers);
    if (workers == 1 || count < 2 * workers) {
        fill(0, count);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (count + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int lo = w * chunk, hi = std::min(count, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(fill, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return ds;
}

std::vector<int> sample_indices(SamplingMode mode, int raw_frames, int frames, int stride,
                                bool train, rng::Stream* jitter, int clip_index, int clip_count) {
    if (frames < 1) throw DataError("sample_indices: frames must be >= 1");
    if (clip_count < 1 || clip_index < 0 || clip_index >= clip_count)
        throw DataError("sample_indices: bad clip index");
    std::vector<int> idx(frames);
    if (mode == SamplingMode::Sparse) {
        if (frames > raw_frames)
            throw DataError("sample_indices: sparse sampling of " + std::to_string(frames) +
                            " frames from a " + std::to_string(raw_frames) + "-frame clip");
        const double frac = (clip_index + 0.5) / clip_count;
        for (int t = 0; t < frames; ++t) {
            const int s0 = static_cast<int>((static_cast<long>(t) * raw_frames) / frames);
            const int s1 = static_cast<int>((static_cast<long>(t + 1) * raw_frames) / frames);
            if (train) {
                if (!jitter) throw DataError("sample_indices: training mode needs a jitter stream");
                idx[t] = s0 + static_cast<int>(jitter->below(static_cast<uint64_t>(s1 - s0)));
            } else {
                idx[t] = s0 + static_cast<int>((s1 - s0) * frac);
                if (idx[t] >= s1) idx[t] = s1 - 1;
            }
        }
    } else {
        const int span = frames * stride;
        if (stride < 1) throw DataError("sample_indices: stride must be >= 1");
        if (span > raw_frames)
            throw DataError("sample_indices: dense window of " + std::to_string(span) +
                            " frames exceeds the " + std::to_string(raw_frames) + "-frame clip");
        int start;
        if (train) {
            if (!jitter) throw DataError("sample_indices: training mode needs a jitter stream");
            start = static_cast<int>(jitter->below(static_cast<uint64_t>(raw_frames - span + 1)));
        } else {
            const double frac = (clip_index + 0.5) / clip_count;
            start = clip_count == 1 ? (raw_frames - span) / 2
                                    : static_cast<int>((raw_frames - span + 1) * frac);
            start = std::min(start, raw_frames - span);
        }
        for (int t = 0; t < frames; ++t) idx[t] = start + t * stride;
    }
    return idx;
}

std::vector<float> gather_frames(const Dataset& ds, const SyntheticSample& sample,
                                 const std::vector<int>& indices) {
    const long elems = ds.frame_elems();
    std::vector<float> out(indices.size() * elems);
    for (size_t t = 0; t < indices.size(); ++t) {
        const int f = indices[t];
        if (f < 0 || f >= ds.raw_frames)
            throw DataError("gather_frames: index " + std::to_string(f) + " out of range");
        std::copy_n(sample.frames.data() + static_cast<size_t>(f) * elems, elems,
                    out.data() + t * elems);
    }
    return out;
}

bool Dataset::operator==(const Dataset& o) const {
    if (raw_frames != o.raw_frames || in_channels != o.in_channels || in_height != o.in_height ||
        in_width != o.in_width || class_count != o.class_count || label_mode != o.label_mode ||
        samples.size() != o.samples.size())
        return false;
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& a = samples[i];
        const auto& b = o.samples[i];
        if (a.seed != b.seed || a.label != b.label || a.multi != b.multi) return false;
        if (a.frames.size() != b.frames.size()) return false;
        // bit-exact comparison
        if (std::memcmp(a.frames.data(), b.frames.data(), a.frames.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    binio::put_u32(out, kVersion);
    binio::put_u32(out, static_cast<uint32_t>(ds.samples.size()));
    binio::put_u32(out, static_cast<uint32_t>(ds.raw_frames));
    binio::put_u32(out, static_cast<uint32_t>(ds.in_channels));
    binio::put_u32(out, static_cast<uint32_t>(ds.in_height));
    binio::put_u32(out, static_cast<uint32_t>(ds.in_width));
    binio::put_u32(out, static_cast<uint32_t>(ds.class_count));
    out.push_back(ds.label_mode == LabelMode::Multi ? 1 : 0);
    const long frame_count = static_cast<long>(ds.raw_frames) * ds.frame_elems();
    for (const auto& s : ds.samples) {
        binio::put_u64(out, s.seed);
        if (ds.label_mode == LabelMode::Single) {
            binio::put_u32(out, s.label);
        } else {
            if (static_cast<int>(s.multi.size()) != ds.class_count)
                throw DataError("write_dataset: multi-label width mismatch");
            for (uint8_t b : s.multi) out.push_back(static_cast<char>(b));
        }
        if (static_cast<long>(s.frames.size()) != frame_count)
            throw DataError("write_dataset: sample frame count mismatch");
        for (float v : s.frames) binio::put_f32(out, v);
    }
    binio::write_file(path, out);
}

Dataset read_dataset(const std::string& path) {
    auto r = binio::Reader::from_file(path);
    const std::string magic = r.take(4);
    if (magic != std::string(kMagic, 4))
        throw BadMagicError("'" + path + "' is not a TRGD dataset (magic \"" + magic + "\")");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw VersionError("'" + path + "': TRGD version " + std::to_string(version) +
                           " unsupported (expected " + std::to_string(kVersion) + ")");
    Dataset ds;
    const uint32_t count = r.u32();
    ds.raw_frames = static_cast<int>(r.u32());
    ds.in_channels = static_cast<int>(r.u32());
    ds.in_height = static_cast<int>(r.u32());
    ds.in_width = static_cast<int>(r.u32());
    ds.class_count = static_cast<int>(r.u32());
    ds.label_mode = r.u8() ? LabelMode::Multi : LabelMode::Single;
    const long frame_count = static_cast<long>(ds.raw_frames) * ds.frame_elems();
    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        s.seed = r.u64();
        if (ds.label_mode == LabelMode::Single) {
            s.label = r.u32();
        } else {
            s.multi.resize(ds.class_count);
            for (auto& b : s.multi) b = r.u8();
        }
        s.frames.resize(frame_count);
        r.f32_array(s.frames.data(), frame_count);
    }
    if (!r.at_end())
        throw TruncatedFileError("'" + path + "' has " + std::to_string(r.remaining()) +
                                 " unexpected trailing bytes");
    return ds;
}

}  // namespace trg
