#include "trg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace trg {

using nlohmann::json;

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.frames = frames;
    m.in_channels = in_channels;
    m.in_height = in_height;
    m.in_width = in_width;
    m.channels = channels;
    m.heads = heads;
    m.trg_layers = trg_layers;
    m.similarity = similarity_from_string(similarity);
    m.sim_channels = sim_channels;
    m.variant = variant_from_string(variant);
    m.classes = class_count();
    m.label_mode = label_mode_from_string(label_mode);
    m.batchnorm = batchnorm;
    m.bn_on_similarity = bn_on_similarity;
    m.per_head_agg_weight = per_head_agg_weight;
    m.scale_similarity = scale_similarity;
    return m;
}

EventGrammar RunConfig::grammar() const {
    EventGrammar g;
    g.prototype_count = prototypes;
    g.class_strings = class_strings;
    g.noise_sigma = noise_sigma;
    g.frames_per_event = frames_per_event;
    g.raw_frames = raw_frames;
    g.in_channels = in_channels;
    g.in_height = in_height;
    g.in_width = in_width;
    g.label_mode = label_mode_from_string(label_mode);
    return g;
}

TrainOptions RunConfig::train_options() const {
    TrainOptions t;
    t.schedule = Schedule{lr, lr_drop_factor, lr_drop_epoch, epochs};
    t.momentum = momentum;
    t.weight_decay = weight_decay;
    t.nesterov = nesterov;
    t.batch_size = batch_size;
    t.eval_clips = eval_clips;
    t.sampling = sampling == "dense" ? SamplingMode::Dense : SamplingMode::Sparse;
    t.stride = stride;
    t.train_samples = train_samples;
    t.val_samples = val_samples;
    t.seed = seed;
    return t;
}

void RunConfig::validate() const {
    model_config().validate();
    grammar().validate();
    Schedule{lr, lr_drop_factor, lr_drop_epoch, epochs}.validate();
    if (sampling != "sparse" && sampling != "dense")
        throw ConfigError("config: sampling must be \"sparse\" or \"dense\", got \"" + sampling +
                          "\"");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (train_samples < 1 || val_samples < 1)
        throw ConfigError("config: train_samples and val_samples must be >= 1");
    if (stride < 1) throw ConfigError("config: stride must be >= 1");
    if (eval_clips < 1) throw ConfigError("config: eval_clips must be >= 1");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (sampling == "sparse" && frames > raw_frames)
        throw ConfigError("config: sparse sampling needs frames <= raw_frames");
    if (sampling == "dense" && frames * stride > raw_frames)
        throw ConfigError("config: dense sampling needs frames*stride <= raw_frames");
}

namespace {

json to_json(const RunConfig& c) {
    json j;
    j["frames"] = c.frames;
    j["channels"] = c.channels;
    j["heads"] = c.heads;
    j["trg_layers"] = c.trg_layers;
    j["similarity"] = c.similarity;
    j["sim_channels"] = c.sim_channels;
    j["variant"] = c.variant;
    j["label_mode"] = c.label_mode;
    j["batchnorm"] = c.batchnorm;
    j["bn_on_similarity"] = c.bn_on_similarity;
    j["per_head_agg_weight"] = c.per_head_agg_weight;
    j["scale_similarity"] = c.scale_similarity;
    j["prototypes"] = c.prototypes;
    j["class_strings"] = c.class_strings;
    j["noise_sigma"] = c.noise_sigma;
    j["frames_per_event"] = c.frames_per_event;
    j["raw_frames"] = c.raw_frames;
    j["in_channels"] = c.in_channels;
    j["in_height"] = c.in_height;
    j["in_width"] = c.in_width;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["lr_drop_epoch"] = c.lr_drop_epoch;
    j["lr_drop_factor"] = c.lr_drop_factor;
    j["momentum"] = c.momentum;
    j["weight_decay"] = c.weight_decay;
    j["nesterov"] = c.nesterov;
    j["batch_size"] = c.batch_size;
    j["train_samples"] = c.train_samples;
    j["val_samples"] = c.val_samples;
    j["sampling"] = c.sampling;
    j["stride"] = c.stride;
    j["eval_clips"] = c.eval_clips;
    j["seed"] = c.seed;
    j["dataset"] = c.dataset;
    j["out_dir"] = c.out_dir;
    j["workers"] = c.workers;
    return j;
}

template <typename T>
void take(const json& j, std::set<std::string>& seen, const char* key, T& out) {
    if (!j.contains(key)) return;
    seen.insert(key);
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: key \"") + key + "\" has the wrong type");
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");

    RunConfig c;
    std::set<std::string> seen;
    take(j, seen, "frames", c.frames);
    take(j, seen, "channels", c.channels);
    take(j, seen, "heads", c.heads);
    take(j, seen, "trg_layers", c.trg_layers);
    take(j, seen, "similarity", c.similarity);
    take(j, seen, "sim_channels", c.sim_channels);
    take(j, seen, "variant", c.variant);
    take(j, seen, "label_mode", c.label_mode);
    take(j, seen, "batchnorm", c.batchnorm);
    take(j, seen, "bn_on_similarity", c.bn_on_similarity);
    take(j, seen, "per_head_agg_weight", c.per_head_agg_weight);
    take(j, seen, "scale_similarity", c.scale_similarity);
    take(j, seen, "prototypes", c.prototypes);
    take(j, seen, "class_strings", c.class_strings);
    take(j, seen, "noise_sigma", c.noise_sigma);
    take(j, seen, "frames_per_event", c.frames_per_event);
    take(j, seen, "raw_frames", c.raw_frames);
    take(j, seen, "in_channels", c.in_channels);
    take(j, seen, "in_height", c.in_height);
    take(j, seen, "in_width", c.in_width);
    take(j, seen, "epochs", c.epochs);
    take(j, seen, "lr", c.lr);
    take(j, seen, "lr_drop_epoch", c.lr_drop_epoch);
    take(j, seen, "lr_drop_factor", c.lr_drop_factor);
    take(j, seen, "momentum", c.momentum);
    take(j, seen, "weight_decay", c.weight_decay);
    take(j, seen, "nesterov", c.nesterov);
    take(j, seen, "batch_size", c.batch_size);
    take(j, seen, "train_samples", c.train_samples);
    take(j, seen, "val_samples", c.val_samples);
    take(j, seen, "sampling", c.sampling);
    take(j, seen, "stride", c.stride);
    take(j, seen, "eval_clips", c.eval_clips);
    take(j, seen, "seed", c.seed);
    take(j, seen, "dataset", c.dataset);
    take(j, seen, "out_dir", c.out_dir);
    take(j, seen, "workers", c.workers);

    for (auto it = j.begin(); it != j.end(); ++it)
        if (!seen.count(it.key()))
            throw ConfigError("config: unknown key \"" + it.key() + "\"");
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    return to_json(cfg).dump(2) + "\n";
}

}  // namespace trg
