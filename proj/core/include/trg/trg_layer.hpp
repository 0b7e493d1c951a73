#pragma once

// One temporal reasoning layer: per-head learnable frame-to-frame adjacency,
// graph convolution through it, squeeze-style head aggregation, residual
// fusion. Input and output are TxCxHxW feature sequences, so layers stack.

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "trg/rng.hpp"
#include "trg/tensor.hpp"

namespace trg {

enum class SimilarityKind { DotProduct, Sum, Bilinear };

// How the per-head graph-conv outputs are fused back into one sequence.
// Learned is the squeeze/score/softmax aggregator; ElemAvg and Concat are
// the ablation replacements.
enum class AggregatorKind { Learned, ElemAvg, Concat };

inline std::string to_string(SimilarityKind k) {
    switch (k) {
        case SimilarityKind::DotProduct: return "dot";
        case SimilarityKind::Sum: return "sum";
        case SimilarityKind::Bilinear: return "bilinear";
    }
    return "?";
}

inline SimilarityKind similarity_from_string(const std::string& s) {
    if (s == "dot") return SimilarityKind::DotProduct;
    if (s == "sum") return SimilarityKind::Sum;
    if (s == "bilinear") return SimilarityKind::Bilinear;
    throw ConfigError("unknown similarity kind '" + s + "' (expected dot, sum or bilinear)");
}

// Scalar pairwise temporal relation between two flattened frame features.
// theta carries the kind's parameter: V for Sum, row-major W1 for Bilinear,
// unused for DotProduct.
template <typename S>
S similarity(std::span<const S> u, std::span<const S> v, SimilarityKind kind,
             std::span<const S> theta = {}) {
    if (u.size() != v.size())
        throw DimensionError("similarity: length mismatch " + std::to_string(u.size()) + " vs " +
                             std::to_string(v.size()));
    const size_t d = u.size();
    switch (kind) {
        case SimilarityKind::DotProduct: {
            S acc = S(0);
            for (size_t i = 0; i < d; ++i) acc += u[i] * v[i];
            return acc;
        }
        case SimilarityKind::Sum: {
            if (theta.size() != d)
                throw DimensionError("similarity(sum): V has length " + std::to_string(theta.size()) +
                                     ", features have " + std::to_string(d));
            S acc = S(0);
            for (size_t i = 0; i < d; ++i) acc += theta[i] * std::tanh(u[i] + v[i]);
            return acc;
        }
        case SimilarityKind::Bilinear: {
            if (theta.size() != d * d)
                throw DimensionError("similarity(bilinear): W1 must be " + std::to_string(d) + "x" +
                                     std::to_string(d));
            S acc = S(0);
            for (size_t i = 0; i < d; ++i) {
                S row = S(0);
                for (size_t j = 0; j < d; ++j) row += theta[i * d + j] * v[j];
                acc += u[i] * row;
            }
            return acc;
        }
    }
    throw ContractError("similarity: unknown kind");
}

struct TrgLayerOptions {
    int heads = 3;
    int channels = 8;       // C of the incoming feature sequence
    int height = 4;         // feature H
    int width = 4;          // feature W
    int sim_channels = 0;   // C' of the similarity transform; 0 = ceil(C/2)
    SimilarityKind similarity = SimilarityKind::DotProduct;
    AggregatorKind aggregator = AggregatorKind::Learned;
    bool batchnorm = true;           // on the 3x3 spatial transform
    bool bn_on_similarity = false;   // optionally also on the 1x1 transform
    bool per_head_agg_weight = false;  // w' as one scalar (default) or per head
    bool scale_similarity = false;     // optional 1/sqrt(d) on e_ij before softmax

    int resolved_sim_channels() const {
        return sim_channels > 0 ? sim_channels : (channels + 1) / 2;
    }
    int flat_dim() const { return resolved_sim_channels() * height * width; }
};

template <typename S>
struct TrgLayerParams {
    TrgLayerOptions opt;

    std::vector<Parameter<S>> sim_kernels;      // N x (C' x C x 1 x 1)
    std::vector<Parameter<S>> spatial_kernels;  // N x (C x C x 3 x 3)
    std::vector<Parameter<S>> bn_gamma, bn_beta;
    std::vector<BnStats<S>> bn_stats;
    std::vector<Parameter<S>> sim_bn_gamma, sim_bn_beta;
    std::vector<BnStats<S>> sim_bn_stats;
    Parameter<S> agg_weight;    // w': {1} shared or {N} per head
    Parameter<S> sum_vector;    // V (Sum similarity only)
    Parameter<S> bilinear_w1;   // W1 (Bilinear similarity only)
    Parameter<S> concat_kernel; // 1x1 (N*C -> C), Concat aggregator only

    TrgLayerParams() = default;

    TrgLayerParams(const TrgLayerOptions& o, const std::string& prefix, uint64_t init_seed,
                   bool zero_spatial)
        : opt(o) {
        if (opt.heads < 1) throw ConfigError("trg layer: head count must be >= 1");
        const int C = opt.channels;
        const int Cp = opt.resolved_sim_channels();
        rng::Stream init(init_seed);
        auto fan_in_uniform = [&](Parameter<S>& p, int fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : p.value) v = static_cast<S>(init.uniform(-bound, bound));
        };
        for (int k = 0; k < opt.heads; ++k) {
            const std::string h = prefix + ".head" + std::to_string(k);
            sim_kernels.emplace_back(h + ".sim_kernel", Shape{Cp, C, 1, 1});
            fan_in_uniform(sim_kernels.back(), C);
            spatial_kernels.emplace_back(h + ".spatial_kernel", Shape{C, C, 3, 3});
            if (!zero_spatial) fan_in_uniform(spatial_kernels.back(), C * 9);
            if (opt.batchnorm) {
                bn_gamma.emplace_back(h + ".bn_gamma", Shape::vec(C));
                std::fill(bn_gamma.back().value.begin(), bn_gamma.back().value.end(), S(1));
                bn_gamma.back().decay_exempt = true;
                bn_beta.emplace_back(h + ".bn_beta", Shape::vec(C));
                bn_beta.back().decay_exempt = true;
                bn_stats.emplace_back(C);
            }
            if (opt.bn_on_similarity) {
                sim_bn_gamma.emplace_back(h + ".sim_bn_gamma", Shape::vec(Cp));
                std::fill(sim_bn_gamma.back().value.begin(), sim_bn_gamma.back().value.end(), S(1));
                sim_bn_gamma.back().decay_exempt = true;
                sim_bn_beta.emplace_back(h + ".sim_bn_beta", Shape::vec(Cp));
                sim_bn_beta.back().decay_exempt = true;
                sim_bn_stats.emplace_back(Cp);
            }
        }
        if (opt.aggregator == AggregatorKind::Learned) {
            agg_weight = Parameter<S>(prefix + ".agg_weight",
                                      opt.per_head_agg_weight ? Shape::vec(opt.heads) : Shape::scalar());
            std::fill(agg_weight.value.begin(), agg_weight.value.end(), S(1));
        }
        if (opt.similarity == SimilarityKind::Sum) {
            sum_vector = Parameter<S>(prefix + ".sim_v", Shape::vec(opt.flat_dim()));
            fan_in_uniform(sum_vector, opt.flat_dim());
        }
        if (opt.similarity == SimilarityKind::Bilinear) {
            bilinear_w1 = Parameter<S>(prefix + ".sim_w1", Shape::mat(opt.flat_dim(), opt.flat_dim()));
            fan_in_uniform(bilinear_w1, opt.flat_dim());
        }
        if (opt.aggregator == AggregatorKind::Concat) {
            concat_kernel = Parameter<S>(prefix + ".concat_kernel", Shape{C, opt.heads * C, 1, 1});
            fan_in_uniform(concat_kernel, opt.heads * C);
        }
    }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> ps;
        for (auto& p : sim_kernels) ps.push_back(&p);
        for (auto& p : spatial_kernels) ps.push_back(&p);
        for (auto& p : bn_gamma) ps.push_back(&p);
        for (auto& p : bn_beta) ps.push_back(&p);
        for (auto& p : sim_bn_gamma) ps.push_back(&p);
        for (auto& p : sim_bn_beta) ps.push_back(&p);
        if (!agg_weight.value.empty()) ps.push_back(&agg_weight);
        if (!sum_vector.value.empty()) ps.push_back(&sum_vector);
        if (!bilinear_w1.value.empty()) ps.push_back(&bilinear_w1);
        if (!concat_kernel.value.empty()) ps.push_back(&concat_kernel);
        return ps;
    }
};

// Inserts each Parameter into a tape exactly once. In training mode the
// leaves are gradient-bound; in eval mode they are constants, so forward-only
// passes skip all backward bookkeeping.
template <typename S>
class ParamBinder {
  public:
    ParamBinder(Tape<S>& tape, bool bind_grads) : tape_(tape), bind_(bind_grads) {}

    Tensor<S> operator()(Parameter<S>& p) {
        auto it = cache_.find(&p);
        if (it != cache_.end()) return it->second;
        Tensor<S> t = bind_ ? tape_.param(p) : tape_.constant(p.shape, p.value);
        cache_.emplace(&p, t);
        return t;
    }

    Tape<S>& tape() { return tape_; }
    bool binds_grads() const { return bind_; }

  private:
    Tape<S>& tape_;
    bool bind_;
    std::unordered_map<const Parameter<S>*, Tensor<S>> cache_;
};

// Optional capture of intermediate quantities for inspection/export.
struct TrgInspection {
    std::vector<std::vector<double>> adjacency;  // per head, row-major TxT
    std::vector<double> head_weights;            // row-major TxN (Learned aggregator)
};

// Head-k adjacency: 1x1-transform every frame, flatten, all-pairs similarity,
// row softmax. The result is TxT and row-stochastic.
template <typename S>
Tensor<S> build_adjacency(ParamBinder<S>& bind, Tensor<S> x, TrgLayerParams<S>& params, int head,
                          BnMode mode) {
    Tape<S>& t = bind.tape();
    const Shape& xs = x.shape();
    if (xs.rank() != 4)
        throw DimensionError("build_adjacency: input must be TxCxHxW, got " + xs.str());
    const int T = xs.dim(0);
    auto y = t.conv2d(x, bind(params.sim_kernels[head]), Conv2dSpec::k1p0());
    if (params.opt.bn_on_similarity) {
        y = t.batch_norm(y, bind(params.sim_bn_gamma[head]), bind(params.sim_bn_beta[head]),
                         params.sim_bn_stats[head], mode);
        y = t.relu(y);
    }
    const int d = params.opt.flat_dim();
    auto flat = t.reshape(y, Shape::mat(T, d));
    Tensor<S> e;
    switch (params.opt.similarity) {
        case SimilarityKind::DotProduct:
            e = t.matmul(flat, t.transpose(flat));
            break;
        case SimilarityKind::Bilinear:
            e = t.matmul(t.matmul(flat, bind(params.bilinear_w1)), t.transpose(flat));
            break;
        case SimilarityKind::Sum: {
            auto pairs = t.tanh_op(t.pairwise_row_sum(flat));         // TxTxd
            auto pf = t.reshape(pairs, Shape::mat(T * T, d));
            auto v = t.reshape(bind(params.sum_vector), Shape::mat(d, 1));
            e = t.reshape(t.matmul(pf, v), Shape::mat(T, T));
            break;
        }
    }
    if (params.opt.scale_similarity) e = t.scale(e, 1.0 / std::sqrt(static_cast<double>(d)));
    for (S v : e.values())
        if (!std::isfinite(v)) throw NumericError("build_adjacency: non-finite similarity value");
    return t.softmax_rows(e);
}

// Graph convolution through one head's adjacency:
// y_i = relu(bn(sum_j a_ij * conv3x3(x_j))), computed as conv-once,
// flatten, adjacency matmul, reshape, normalize, activate.
template <typename S>
Tensor<S> graph_conv(ParamBinder<S>& bind, Tensor<S> x, Tensor<S> adj, TrgLayerParams<S>& params,
                     int head, BnMode mode) {
    Tape<S>& t = bind.tape();
    const Shape& xs = x.shape();
    if (xs.rank() != 4)
        throw DimensionError("graph_conv: input must be TxCxHxW, got " + xs.str());
    const int T = xs.dim(0), C = xs.dim(1), H = xs.dim(2), W = xs.dim(3);
    if (adj.shape() != Shape::mat(T, T))
        throw DimensionError("graph_conv: adjacency " + adj.shape().str() + " does not match " +
                             std::to_string(T) + " nodes");
    auto conv = t.conv2d(x, bind(params.spatial_kernels[head]), Conv2dSpec::k3p1());
    auto flat = t.reshape(conv, Shape::mat(T, C * H * W));
    auto mixed = t.reshape(t.matmul(adj, flat), Shape{T, C, H, W});
    if (params.opt.batchnorm)
        mixed = t.batch_norm(mixed, bind(params.bn_gamma[head]), bind(params.bn_beta[head]),
                             params.bn_stats[head], mode);
    return t.relu(mixed);
}

// Squeeze-style aggregator: pool each head's sequence to per-node scalars,
// score with w', softmax over heads per node, convexly mix head outputs.
// Returns the mixed sequence and the TxN head weights.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> aggregate(ParamBinder<S>& bind, const std::vector<Tensor<S>>& heads,
                                          TrgLayerParams<S>& params) {
    Tape<S>& t = bind.tape();
    const int N = static_cast<int>(heads.size());
    if (N < 1) throw DimensionError("aggregate: needs at least one head");
    std::vector<Tensor<S>> pooled;
    pooled.reserve(N);
    for (const auto& h : heads) pooled.push_back(t.global_avg_pool(h));  // each: vec T
    auto scores = t.stack_cols(pooled);                                  // TxN
    auto beta = t.relu(t.mul_bcast(scores, bind(params.agg_weight)));
    auto beta_norm = t.softmax_rows(beta);  // all-zero rows normalize to uniform 1/N
    auto out = t.head_mix(heads, beta_norm);
    return {out, beta_norm};
}

// Full layer: per-head adjacency + graph conv, aggregation per the
// configured kind, then residual fusion relu(x + z).
template <typename S>
Tensor<S> trg_layer_forward(ParamBinder<S>& bind, Tensor<S> x, TrgLayerParams<S>& params, BnMode mode,
                            TrgInspection* inspect = nullptr) {
    Tape<S>& t = bind.tape();
    const int N = params.opt.heads;
    std::vector<Tensor<S>> heads;
    heads.reserve(N);
    for (int k = 0; k < N; ++k) {
        auto adj = build_adjacency(bind, x, params, k, mode);
        if (inspect) {
            auto av = adj.values();
            inspect->adjacency.emplace_back(av.begin(), av.end());
        }
        heads.push_back(graph_conv(bind, x, adj, params, k, mode));
    }
    Tensor<S> z;
    switch (params.opt.aggregator) {
        case AggregatorKind::Learned: {
            auto [mixed, beta] = aggregate(bind, heads, params);
            z = mixed;
            if (inspect) {
                auto bv = beta.values();
                inspect->head_weights.assign(bv.begin(), bv.end());
            }
            break;
        }
        case AggregatorKind::ElemAvg: {
            const int T = x.shape().dim(0);
            std::vector<S> w(static_cast<size_t>(T) * N, S(1) / static_cast<S>(N));
            z = t.head_mix(heads, t.constant(Shape::mat(T, N), w));
            break;
        }
        case AggregatorKind::Concat: {
            auto cat = t.concat_channels(heads);
            z = t.conv2d(cat, bind(params.concat_kernel), Conv2dSpec::k1p0());
            break;
        }
    }
    return t.relu(t.add(x, z));
}

}  // namespace trg
