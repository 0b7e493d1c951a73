#include "trg/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "binio.hpp"

namespace trg {

namespace {
constexpr char kMagic[4] = {'T', 'R', 'G', 'W'};
constexpr uint32_t kVersion = 1;

using nlohmann::json;
}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["frames"] = cfg.frames;
    j["in_channels"] = cfg.in_channels;
    j["in_height"] = cfg.in_height;
    j["in_width"] = cfg.in_width;
    j["channels"] = cfg.channels;
    j["heads"] = cfg.heads;
    j["trg_layers"] = cfg.trg_layers;
    j["similarity"] = to_string(cfg.similarity);
    j["sim_channels"] = cfg.sim_channels;
    j["variant"] = to_string(cfg.variant);
    j["classes"] = cfg.classes;
    j["label_mode"] = to_string(cfg.label_mode);
    j["batchnorm"] = cfg.batchnorm;
    j["bn_on_similarity"] = cfg.bn_on_similarity;
    j["per_head_agg_weight"] = cfg.per_head_agg_weight;
    j["scale_similarity"] = cfg.scale_similarity;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.frames = j.at("frames").get<int>();
        cfg.in_channels = j.at("in_channels").get<int>();
        cfg.in_height = j.at("in_height").get<int>();
        cfg.in_width = j.at("in_width").get<int>();
        cfg.channels = j.at("channels").get<int>();
        cfg.heads = j.at("heads").get<int>();
        cfg.trg_layers = j.at("trg_layers").get<int>();
        cfg.similarity = similarity_from_string(j.at("similarity").get<std::string>());
        cfg.sim_channels = j.at("sim_channels").get<int>();
        cfg.variant = variant_from_string(j.at("variant").get<std::string>());
        cfg.classes = j.at("classes").get<int>();
        cfg.label_mode = label_mode_from_string(j.at("label_mode").get<std::string>());
        cfg.batchnorm = j.at("batchnorm").get<bool>();
        cfg.bn_on_similarity = j.at("bn_on_similarity").get<bool>();
        cfg.per_head_agg_weight = j.at("per_head_agg_weight").get<bool>();
        cfg.scale_similarity = j.at("scale_similarity").get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

void put_record(std::string& out, const std::string& name, const Shape& shape,
                const std::vector<float>& values) {
    binio::put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    binio::put_u32(out, static_cast<uint32_t>(shape.rank()));
    for (int i = 0; i < shape.rank(); ++i)
        binio::put_u32(out, static_cast<uint32_t>(shape.dim(i)));
    for (float v : values) binio::put_f32(out, v);
}

}  // namespace

void save_checkpoint(Model<float>& model, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    binio::put_u32(out, kVersion);
    const std::string cfg = model_config_to_json(model.config());
    binio::put_u32(out, static_cast<uint32_t>(cfg.size()));
    out.append(cfg);

    const auto params = model.parameters();
    const auto buffers = model.buffers();
    binio::put_u32(out, static_cast<uint32_t>(params.size() + buffers.size()));
    for (const auto* p : params) put_record(out, p->name, p->shape, p->value);
    for (const auto& [name, values] : buffers)
        put_record(out, name, Shape::vec(static_cast<int>(values->size())), *values);
    binio::write_file(path, out);
}

Model<float> load_checkpoint(const std::string& path) {
    auto r = binio::Reader::from_file(path);
    const std::string magic = r.take(4);
    if (magic != std::string(kMagic, 4))
        throw BadMagicError("'" + path + "' is not a TRGW checkpoint (magic \"" + magic + "\")");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw VersionError("'" + path + "': TRGW version " + std::to_string(version) +
                           " unsupported (expected " + std::to_string(kVersion) + ")");
    const uint32_t cfg_len = r.u32();
    const ModelConfig cfg = model_config_from_json(r.take(cfg_len));
    Model<float> model(cfg, /*init_seed=*/0);

    std::unordered_map<std::string, std::vector<float>*> sinks;
    for (auto* p : model.parameters()) sinks[p->name] = &p->value;
    for (auto& [name, values] : model.buffers()) sinks[name] = values;

    const uint32_t records = r.u32();
    if (records != sinks.size())
        throw IoError("'" + path + "' holds " + std::to_string(records) + " records, model wants " +
                      std::to_string(sinks.size()));
    for (uint32_t i = 0; i < records; ++i) {
        const uint32_t name_len = r.u32();
        const std::string name = r.take(name_len);
        const uint32_t rank = r.u32();
        long numel = 1;
        for (uint32_t d = 0; d < rank; ++d) numel *= static_cast<long>(r.u32());
        auto it = sinks.find(name);
        if (it == sinks.end()) throw IoError("'" + path + "' has unknown record '" + name + "'");
        if (static_cast<long>(it->second->size()) != numel)
            throw IoError("'" + path + "' record '" + name + "' holds " + std::to_string(numel) +
                          " values, model wants " + std::to_string(it->second->size()));
        r.f32_array(it->second->data(), numel);
        sinks.erase(it);
    }
    if (!sinks.empty())
        throw IoError("'" + path + "' is missing record '" + sinks.begin()->first + "'");
    if (!r.at_end())
        throw TruncatedFileError("'" + path + "' has " + std::to_string(r.remaining()) +
                                 " unexpected trailing bytes");
    return model;
}

}  // namespace trg
