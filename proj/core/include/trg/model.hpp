#pragma once

// Full classifiable models: a small two-stage conv backbone, a stack of
// temporal reasoning layers, the ordered-concatenation classifier head, both
// losses, and the ablation variants that swap or remove the temporal part.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "trg/rng.hpp"
#include "trg/trg_layer.hpp"

namespace trg {

enum class Variant { FullTrg, AvgPool, GraphConcat, GraphElemAvg };
enum class LabelMode { Single, Multi };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::FullTrg: return "full";
        case Variant::AvgPool: return "avgpool";
        case Variant::GraphConcat: return "graph_concat";
        case Variant::GraphElemAvg: return "graph_elem_avg";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::FullTrg;
    if (s == "avgpool") return Variant::AvgPool;
    if (s == "graph_concat") return Variant::GraphConcat;
    if (s == "graph_elem_avg") return Variant::GraphElemAvg;
    throw ConfigError("unknown variant '" + s +
                      "' (expected full, avgpool, graph_concat or graph_elem_avg)");
}

inline std::string to_string(LabelMode m) {
    return m == LabelMode::Single ? "single" : "multi";
}

inline LabelMode label_mode_from_string(const std::string& s) {
    if (s == "single") return LabelMode::Single;
    if (s == "multi") return LabelMode::Multi;
    throw ConfigError("unknown label mode '" + s + "' (expected single or multi)");
}

struct ModelConfig {
    int frames = 8;  // T, frames per clip after sampling
    int in_channels = 3;
    int in_height = 16;
    int in_width = 16;
    int channels = 8;  // C, backbone output width and TRG feature width
    int heads = 3;
    int trg_layers = 1;
    SimilarityKind similarity = SimilarityKind::DotProduct;
    int sim_channels = 0;  // 0 = ceil(C/2)
    Variant variant = Variant::FullTrg;
    int classes = 6;
    LabelMode label_mode = LabelMode::Single;
    bool batchnorm = true;
    bool bn_on_similarity = false;
    bool per_head_agg_weight = false;
    bool scale_similarity = false;

    // two 2x downsample stages
    int feature_height() const { return in_height / 4; }
    int feature_width() const { return in_width / 4; }

    void validate() const {
        if (frames < 1) throw ConfigError("model: frames must be >= 1");
        if (in_channels < 1 || in_height < 4 || in_width < 4)
            throw ConfigError("model: input extents too small");
        if (in_height % 4 || in_width % 4)
            throw ConfigError("model: input height/width must be divisible by 4 (two 2x downsamples)");
        if (channels < 1) throw ConfigError("model: channels must be >= 1");
        if (heads < 1) throw ConfigError("model: heads must be >= 1");
        if (trg_layers < 1) throw ConfigError("model: trg_layers must be >= 1");
        if (classes < 1) throw ConfigError("model: classes must be >= 1");
        if (sim_channels < 0) throw ConfigError("model: sim_channels must be >= 0");
    }

    TrgLayerOptions layer_options() const {
        TrgLayerOptions o;
        o.heads = heads;
        o.channels = channels;
        o.height = feature_height();
        o.width = feature_width();
        o.sim_channels = sim_channels;
        o.similarity = similarity;
        o.batchnorm = batchnorm;
        o.bn_on_similarity = bn_on_similarity;
        o.per_head_agg_weight = per_head_agg_weight;
        o.scale_similarity = scale_similarity;
        switch (variant) {
            case Variant::GraphConcat: o.aggregator = AggregatorKind::Concat; break;
            case Variant::GraphElemAvg: o.aggregator = AggregatorKind::ElemAvg; break;
            default: o.aggregator = AggregatorKind::Learned; break;
        }
        return o;
    }
};

// A single- or multi-label ground truth.
using Label = std::variant<int, std::vector<uint8_t>>;

// Grouped trainable-scalar counts; `trg` covers everything the temporal
// layers own, split out so the closed-form accounting can be compared
// term by term.
struct ParamBreakdown {
    long total = 0;
    long backbone = 0;
    long classifier = 0;
    long trg = 0;
    long trg_similarity = 0;   // per-head 1x1 transform kernels
    long trg_spatial = 0;      // per-head 3x3 transform kernels
    long trg_aggregator = 0;   // w' (or the concat reduction kernel)
    long trg_batchnorm = 0;    // gamma/beta inside trg layers
    long trg_sim_extra = 0;    // V / W1 carried by the similarity kind
};

template <typename S>
class Model {
  public:
    // Every weight is fan-in-scaled uniform, spatial transforms included: a
    // zero-initialized spatial transform behind batchnorm(0)=0 and the
    // relu-at-0 zero subgradient would never receive a gradient, leaving the
    // temporal layers frozen at the residual identity for the whole run.
    Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
        cfg_.validate();
        rng::Stream init(rng::derive(init_seed, "init"));
        auto fan_in_uniform = [&](Parameter<S>& p, int fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : p.value) v = static_cast<S>(init.uniform(-bound, bound));
        };

        const int C = cfg_.channels;
        conv1_ = Parameter<S>("backbone.conv1.weight", Shape{C, cfg_.in_channels, 3, 3});
        fan_in_uniform(conv1_, cfg_.in_channels * 9);
        bias1_ = Parameter<S>("backbone.conv1.bias", Shape::vec(C));
        conv2_ = Parameter<S>("backbone.conv2.weight", Shape{C, C, 3, 3});
        fan_in_uniform(conv2_, C * 9);
        bias2_ = Parameter<S>("backbone.conv2.bias", Shape::vec(C));

        if (cfg_.variant != Variant::AvgPool) {
            for (int l = 0; l < cfg_.trg_layers; ++l)
                layers_.emplace_back(cfg_.layer_options(), "trg" + std::to_string(l),
                                     rng::derive(init_seed, "trg_layer" + std::to_string(l)),
                                     /*zero_spatial=*/false);
        }

        const int head_dim = classifier_input_dim();
        fc_weight_ = Parameter<S>("classifier.weight", Shape::mat(cfg_.classes, head_dim));
        fan_in_uniform(fc_weight_, head_dim);
        fc_bias_ = Parameter<S>("classifier.bias", Shape::mat(cfg_.classes, 1));
    }

    const ModelConfig& config() const { return cfg_; }
    std::vector<TrgLayerParams<S>>& layers() { return layers_; }
    Parameter<S>& classifier_weight() { return fc_weight_; }
    Parameter<S>& classifier_bias() { return fc_bias_; }

    int classifier_input_dim() const {
        return cfg_.variant == Variant::AvgPool ? cfg_.channels : cfg_.frames * cfg_.channels;
    }

    // Backbone stub: per-frame conv3x3 + relu + 2x avg-pool, twice. Frames
    // stay independent; all temporal mixing happens in the trg layers.
    Tensor<S> features(ParamBinder<S>& bind, std::span<const S> frames) {
        Tape<S>& t = bind.tape();
        const Shape in{cfg_.frames, cfg_.in_channels, cfg_.in_height, cfg_.in_width};
        if (static_cast<long>(frames.size()) != in.numel())
            throw DimensionError("features: got " + std::to_string(frames.size()) +
                                 " values, config wants " + in.str());
        auto x = t.constant(in, frames);
        return features_from(bind, x);
    }

    Tensor<S> features_from(ParamBinder<S>& bind, Tensor<S> x) {
        Tape<S>& t = bind.tape();
        auto s1 = t.avg_pool2x2(t.relu(t.conv2d(x, bind(conv1_), Conv2dSpec::k3p1(), bind(bias1_))));
        return t.avg_pool2x2(t.relu(t.conv2d(s1, bind(conv2_), Conv2dSpec::k3p1(), bind(bias2_))));
    }

    // Temporal head per variant; identity for AvgPool (the temporal graph is
    // removed entirely there).
    Tensor<S> temporal_head(ParamBinder<S>& bind, Tensor<S> feat, BnMode mode,
                            TrgInspection* inspect = nullptr) {
        Tensor<S> h = feat;
        for (size_t l = 0; l < layers_.size(); ++l)
            h = trg_layer_forward(bind, h, layers_[l], mode, l == 0 ? inspect : nullptr);
        return h;
    }

    // Classifier: global-avg-pool each frame to a C-vector; FullTrg and the
    // graph ablations concatenate the T vectors in temporal order (order
    // sensitivity lives here), AvgPool averages over T instead.
    Tensor<S> classify(ParamBinder<S>& bind, Tensor<S> h) {
        Tape<S>& t = bind.tape();
        auto pooled = t.spatial_mean(h);  // T x C
        Tensor<S> flat;
        if (cfg_.variant == Variant::AvgPool) {
            flat = t.reshape(t.mean_rows(pooled), Shape::mat(cfg_.channels, 1));
        } else {
            flat = t.reshape(pooled, Shape::mat(cfg_.frames * cfg_.channels, 1));
        }
        return t.add(t.matmul(bind(fc_weight_), flat), bind(fc_bias_));  // classes x 1
    }

    Tensor<S> forward(ParamBinder<S>& bind, std::span<const S> frames, BnMode mode,
                      TrgInspection* inspect = nullptr) {
        auto feat = features(bind, frames);
        auto h = temporal_head(bind, feat, mode, inspect);
        return classify(bind, h);
    }

    Tensor<S> loss(Tape<S>& t, Tensor<S> logits, const Label& label) {
        if (cfg_.label_mode == LabelMode::Single) {
            if (!std::holds_alternative<int>(label))
                throw ContractError("loss: single-label model got a multi-label target");
            return t.cross_entropy(logits, std::get<int>(label));
        }
        if (!std::holds_alternative<std::vector<uint8_t>>(label))
            throw ContractError("loss: multi-label model got a single-label target");
        return t.binary_sigmoid_loss(logits, std::get<std::vector<uint8_t>>(label));
    }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> ps = {&conv1_, &bias1_, &conv2_, &bias2_};
        for (auto& layer : layers_)
            for (auto* p : layer.parameters()) ps.push_back(p);
        ps.push_back(&fc_weight_);
        ps.push_back(&fc_bias_);
        return ps;
    }

    // Named non-trainable buffers (batchnorm running statistics).
    std::vector<std::pair<std::string, std::vector<S>*>> buffers() {
        std::vector<std::pair<std::string, std::vector<S>*>> bs;
        for (size_t l = 0; l < layers_.size(); ++l) {
            auto& layer = layers_[l];
            const std::string prefix = "trg" + std::to_string(l);
            for (size_t k = 0; k < layer.bn_stats.size(); ++k) {
                const std::string h = prefix + ".head" + std::to_string(k);
                bs.emplace_back(h + ".bn_running_mean", &layer.bn_stats[k].running_mean);
                bs.emplace_back(h + ".bn_running_var", &layer.bn_stats[k].running_var);
            }
            for (size_t k = 0; k < layer.sim_bn_stats.size(); ++k) {
                const std::string h = prefix + ".head" + std::to_string(k);
                bs.emplace_back(h + ".sim_bn_running_mean", &layer.sim_bn_stats[k].running_mean);
                bs.emplace_back(h + ".sim_bn_running_var", &layer.sim_bn_stats[k].running_var);
            }
        }
        return bs;
    }

    ParamBreakdown param_breakdown() {
        // count via value.size(): absent optional parameters hold no values
        auto n = [](const Parameter<S>& p) { return static_cast<long>(p.value.size()); };
        ParamBreakdown b;
        b.backbone = n(conv1_) + n(bias1_) + n(conv2_) + n(bias2_);
        b.classifier = n(fc_weight_) + n(fc_bias_);
        for (auto& layer : layers_) {
            for (auto& p : layer.sim_kernels) b.trg_similarity += n(p);
            for (auto& p : layer.spatial_kernels) b.trg_spatial += n(p);
            for (auto& p : layer.bn_gamma) b.trg_batchnorm += n(p);
            for (auto& p : layer.bn_beta) b.trg_batchnorm += n(p);
            for (auto& p : layer.sim_bn_gamma) b.trg_batchnorm += n(p);
            for (auto& p : layer.sim_bn_beta) b.trg_batchnorm += n(p);
            b.trg_aggregator += n(layer.agg_weight) + n(layer.concat_kernel);
            b.trg_sim_extra += n(layer.sum_vector) + n(layer.bilinear_w1);
        }
        b.trg = b.trg_similarity + b.trg_spatial + b.trg_aggregator + b.trg_batchnorm +
                b.trg_sim_extra;
        b.total = b.backbone + b.classifier + b.trg;
        return b;
    }

  private:
    ModelConfig cfg_;
    Parameter<S> conv1_, bias1_, conv2_, bias2_;
    std::vector<TrgLayerParams<S>> layers_;
    Parameter<S> fc_weight_, fc_bias_;
};

// Table-style variant factory.
template <typename S>
Model<S> build_variant(const ModelConfig& cfg, uint64_t init_seed) {
    return Model<S>(cfg, init_seed);
}

}  // namespace trg
