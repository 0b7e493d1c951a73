#pragma once

// Dense rank<=4 tensors plus a reverse-mode tape over the fixed op set the
// temporal-reasoning-graph model needs. Ops record a backward closure on the
// tape; backward() replays them in reverse creation order, which is a valid
// topological order by construction. Scalars S are float (training) or
// double (gradient checking).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trg/errors.hpp"

namespace trg {

// ============================================================================
// Shape
// ============================================================================

class Shape {
  public:
    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        if (dims.size() > 4) throw DimensionError("Shape: rank > 4 not supported");
        for (int d : dims) {
            if (d <= 0) throw DimensionError("Shape: extents must be positive, got " + std::to_string(d));
            d_[rank_++] = d;
        }
    }

    static Shape scalar() { return Shape{1}; }
    static Shape vec(int n) { return Shape{n}; }
    static Shape mat(int r, int c) { return Shape{r, c}; }

    int rank() const { return rank_; }
    int dim(int i) const { return d_[i]; }
    long numel() const {
        long n = 1;
        for (int i = 0; i < rank_; ++i) n *= d_[i];
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (d_[i] != o.d_[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank_; ++i) {
            if (i) s += "x";
            s += std::to_string(d_[i]);
        }
        return s + "]";
    }

  private:
    std::array<int, 4> d_{1, 1, 1, 1};
    int rank_ = 0;
};

// ============================================================================
// Parameter: a named learnable buffer living outside any tape
// ============================================================================

template <typename S>
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;
    bool decay_exempt = false;  // batchnorm scale/shift skip weight decay
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Shape sh)
        : name(std::move(n)), shape(sh), value(sh.numel(), S(0)), grad(sh.numel(), S(0)) {}

    long numel() const { return shape.numel(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }
};

// Per-channel running statistics for batch normalization. Not trained;
// updated by the op in training mode, consumed in eval mode.
template <typename S>
struct BnStats {
    std::vector<S> running_mean;
    std::vector<S> running_var;

    BnStats() = default;
    explicit BnStats(int channels)
        : running_mean(channels, S(0)), running_var(channels, S(1)) {}
};

enum class BnMode { Training, Eval };

struct Conv2dSpec {
    int kh = 3, kw = 3, pad = 1, stride = 1;
    static Conv2dSpec k3p1() { return {3, 3, 1, 1}; }
    static Conv2dSpec k1p0() { return {1, 1, 0, 1}; }
};

// ============================================================================
// Tape + Tensor handle
// ============================================================================

template <typename S>
class Tape;

template <typename S>
class Tensor {
  public:
    Tensor() = default;
    Tensor(Tape<S>* tape, int id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    Tape<S>* tape() const { return tape_; }
    int id() const { return id_; }

    const Shape& shape() const;
    long numel() const { return shape().numel(); }
    std::span<const S> values() const;
    std::span<const S> grad() const;
    bool requires_grad() const;
    S item() const;  // single-element tensors only

  private:
    Tape<S>* tape_ = nullptr;
    int id_ = -1;
};

template <typename S>
class Tape {
  public:
    struct Node {
        Shape shape;
        std::vector<S> value;
        std::vector<S> grad;     // lazily allocated, reset per backward pass
        S* grad_ext = nullptr;   // parameter leaves accumulate here instead
        bool requires_grad = false;
        const char* op = "leaf";
        std::function<void()> backward;
    };

    // When set, every op verifies its outputs are finite. Cheap at test
    // scale, skipped in the training hot path.
    bool check_finite = false;

    // ---- leaves -----------------------------------------------------------

    Tensor<S> constant(const Shape& sh, std::span<const S> v) {
        return make_leaf(sh, v, false, nullptr);
    }
    Tensor<S> constant(const Shape& sh, std::initializer_list<S> v) {
        return make_leaf(sh, std::span<const S>(v.begin(), v.size()), false, nullptr);
    }
    Tensor<S> leaf(const Shape& sh, std::span<const S> v, bool requires_grad) {
        return make_leaf(sh, v, requires_grad, nullptr);
    }
    // Bound leaf: backward accumulates straight into p.grad, so repeated
    // backward passes sum as the contract requires.
    Tensor<S> param(Parameter<S>& p) {
        return make_leaf(p.shape, p.value, true, p.grad.data());
    }

    // ---- introspection -----------------------------------------------------

    const Node& node(int id) const { return nodes_[id]; }
    size_t size() const { return nodes_.size(); }

    std::span<S> grad_buffer(int id) {
        Node& n = nodes_[id];
        long ne = n.shape.numel();
        if (n.grad_ext) return {n.grad_ext, static_cast<size_t>(ne)};
        if (n.grad.empty()) n.grad.assign(ne, S(0));
        return n.grad;
    }

    // ---- backward ----------------------------------------------------------

    // Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse.
    // Internal gradient buffers are reset per call; parameter buffers are
    // not, so calling backward twice doubles parameter gradients.
    void backward(Tensor<S> loss) {
        if (loss.tape() != this) throw ContractError("backward: tensor belongs to another tape");
        if (loss.numel() != 1)
            throw ContractError("backward: loss must be a scalar, got shape " +
                                nodes_[loss.id()].shape.str());
        for (Node& n : nodes_)
            if (!n.grad_ext) n.grad.clear();
        grad_buffer(loss.id())[0] += S(1);
        for (int i = loss.id(); i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.requires_grad || !n.backward) continue;
            if (!n.grad_ext && n.grad.empty()) continue;  // nothing flowed here
            n.backward();
        }
    }

    // ---- ops ----------------------------------------------------------------

    Tensor<S> add(Tensor<S> a, Tensor<S> b) {
        check_same_tape(a, b);
        const Node& na = nodes_[a.id()];
        const Node& nb = nodes_[b.id()];
        if (na.shape != nb.shape)
            throw DimensionError("add: shape mismatch " + na.shape.str() + " vs " + nb.shape.str());
        Tensor<S> out = fresh(na.shape, a, b, "add");
        Node& no = nodes_[out.id()];
        const long n = na.shape.numel();
        for (long i = 0; i < n; ++i) no.value[i] = na.value[i] + nb.value[i];
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, b, out] {
                auto g = grad_buffer(out.id());
                if (nodes_[a.id()].requires_grad) {
                    auto ga = grad_buffer(a.id());
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (nodes_[b.id()].requires_grad) {
                    auto gb = grad_buffer(b.id());
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                }
            };
        }
        return out;
    }

    Tensor<S> mul(Tensor<S> a, Tensor<S> b) {
        check_same_tape(a, b);
        const Node& na = nodes_[a.id()];
        const Node& nb = nodes_[b.id()];
        if (na.shape != nb.shape)
            throw DimensionError("mul: shape mismatch " + na.shape.str() + " vs " + nb.shape.str());
        Tensor<S> out = fresh(na.shape, a, b, "mul");
        Node& no = nodes_[out.id()];
        const long n = na.shape.numel();
        for (long i = 0; i < n; ++i) no.value[i] = na.value[i] * nb.value[i];
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, b, out] {
                auto g = grad_buffer(out.id());
                const auto& av = nodes_[a.id()].value;
                const auto& bv = nodes_[b.id()].value;
                if (nodes_[a.id()].requires_grad) {
                    auto ga = grad_buffer(a.id());
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                }
                if (nodes_[b.id()].requires_grad) {
                    auto gb = grad_buffer(b.id());
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                }
            };
        }
        return out;
    }

    Tensor<S> scale(Tensor<S> a, double c) {
        const Node& na = nodes_[a.id()];
        Tensor<S> out = fresh(na.shape, a, "scale");
        Node& no = nodes_[out.id()];
        const long n = na.shape.numel();
        const S cs = static_cast<S>(c);
        for (long i = 0; i < n; ++i) no.value[i] = na.value[i] * cs;
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out, cs] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * cs;
            };
        }
        return out;
    }

    Tensor<S> sum(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        Tensor<S> out = fresh(Shape::scalar(), a, "sum");
        Node& no = nodes_[out.id()];
        S acc = S(0);
        for (S v : na.value) acc += v;
        no.value[0] = acc;
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out] {
                const S g = grad_buffer(out.id())[0];
                auto ga = grad_buffer(a.id());
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
            };
        }
        return out;
    }

    // Inner product against a fixed weighting; used to form generic scalar
    // losses for gradient probes.
    Tensor<S> weighted_sum(Tensor<S> a, std::span<const S> w) {
        const Node& na = nodes_[a.id()];
        if (static_cast<long>(w.size()) != na.shape.numel())
            throw DimensionError("weighted_sum: weight count mismatch");
        Tensor<S> out = fresh(Shape::scalar(), a, "weighted_sum");
        Node& no = nodes_[out.id()];
        S acc = S(0);
        for (size_t i = 0; i < w.size(); ++i) acc += na.value[i] * w[i];
        no.value[0] = acc;
        finish(out);
        if (no.requires_grad) {
            std::vector<S> wc(w.begin(), w.end());
            no.backward = [this, a, out, wc = std::move(wc)] {
                const S g = grad_buffer(out.id())[0];
                auto ga = grad_buffer(a.id());
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g * wc[i];
            };
        }
        return out;
    }

    Tensor<S> reshape(Tensor<S> a, const Shape& sh) {
        const Node& na = nodes_[a.id()];
        if (sh.numel() != na.shape.numel())
            throw DimensionError("reshape: element count mismatch " + na.shape.str() + " -> " + sh.str());
        Tensor<S> out = fresh(sh, a, "reshape");
        Node& no = nodes_[out.id()];
        no.value = na.value;
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            };
        }
        return out;
    }

    Tensor<S> matmul(Tensor<S> a, Tensor<S> b) {
        check_same_tape(a, b);
        const Node& na = nodes_[a.id()];
        const Node& nb = nodes_[b.id()];
        if (na.shape.rank() != 2 || nb.shape.rank() != 2 || na.shape.dim(1) != nb.shape.dim(0))
            throw DimensionError("matmul: incompatible shapes " + na.shape.str() + " x " + nb.shape.str());
        const int m = na.shape.dim(0), k = na.shape.dim(1), n = nb.shape.dim(1);
        Tensor<S> out = fresh(Shape::mat(m, n), a, b, "matmul");
        Node& no = nodes_[out.id()];
        const S* A = na.value.data();
        const S* B = nb.value.data();
        S* C = no.value.data();
        for (int i = 0; i < m; ++i) {
            S* crow = C + i * n;
            for (int kk = 0; kk < k; ++kk) {
                const S av = A[i * k + kk];
                const S* brow = B + kk * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, b, out, m, k, n] {
                auto g = grad_buffer(out.id());
                const S* A = nodes_[a.id()].value.data();
                const S* B = nodes_[b.id()].value.data();
                if (nodes_[a.id()].requires_grad) {
                    auto ga = grad_buffer(a.id());
                    // dA = dC * B^T : rows of dC dotted with rows of B
                    for (int i = 0; i < m; ++i)
                        for (int kk = 0; kk < k; ++kk) {
                            S acc = S(0);
                            const S* grow = g.data() + i * n;
                            const S* brow = B + kk * n;
                            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                            ga[i * k + kk] += acc;
                        }
                }
                if (nodes_[b.id()].requires_grad) {
                    auto gb = grad_buffer(b.id());
                    // dB = A^T * dC
                    for (int i = 0; i < m; ++i) {
                        const S* grow = g.data() + i * n;
                        for (int kk = 0; kk < k; ++kk) {
                            const S av = A[i * k + kk];
                            S* brow = gb.data() + kk * n;
                            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                        }
                    }
                }
            };
        }
        return out;
    }

    Tensor<S> transpose(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        if (na.shape.rank() != 2) throw DimensionError("transpose: expects a matrix, got " + na.shape.str());
        const int r = na.shape.dim(0), c = na.shape.dim(1);
        Tensor<S> out = fresh(Shape::mat(c, r), a, "transpose");
        Node& no = nodes_[out.id()];
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) no.value[j * r + i] = na.value[i * c + j];
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out, r, c] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
            };
        }
        return out;
    }

    // Zero-padded cross-correlation. x is C_in x H x W or B x C_in x H x W,
    // kernel is C_out x C_in x kh x kw, bias (optional) is length C_out.
    // Only the two geometries the model uses are accepted; both preserve HxW.
    Tensor<S> conv2d(Tensor<S> x, Tensor<S> kernel, const Conv2dSpec& spec, Tensor<S> bias = {}) {
        const Node& nx = nodes_[x.id()];
        const Node& nk = nodes_[kernel.id()];
        const bool batched = nx.shape.rank() == 4;
        if (!batched && nx.shape.rank() != 3)
            throw DimensionError("conv2d: input must be CxHxW or BxCxHxW, got " + nx.shape.str());
        if (nk.shape.rank() != 4)
            throw DimensionError("conv2d: kernel must be rank 4, got " + nk.shape.str());
        const bool k3 = spec.kh == 3 && spec.kw == 3 && spec.pad == 1 && spec.stride == 1;
        const bool k1 = spec.kh == 1 && spec.kw == 1 && spec.pad == 0 && spec.stride == 1;
        if (!k3 && !k1)
            throw ConfigError("conv2d: unsupported kernel/pad/stride " + std::to_string(spec.kh) + "x" +
                              std::to_string(spec.kw) + "/p" + std::to_string(spec.pad) + "/s" +
                              std::to_string(spec.stride) + " (supported: 3x3/p1/s1, 1x1/p0/s1)");
        if (nk.shape.dim(2) != spec.kh || nk.shape.dim(3) != spec.kw)
            throw ConfigError("conv2d: kernel shape " + nk.shape.str() + " disagrees with spec");
        const int B = batched ? nx.shape.dim(0) : 1;
        const int Cin = batched ? nx.shape.dim(1) : nx.shape.dim(0);
        const int H = batched ? nx.shape.dim(2) : nx.shape.dim(1);
        const int W = batched ? nx.shape.dim(3) : nx.shape.dim(2);
        const int Cout = nk.shape.dim(0);
        if (nk.shape.dim(1) != Cin)
            throw DimensionError("conv2d: kernel expects " + std::to_string(nk.shape.dim(1)) +
                                 " input channels, input has " + std::to_string(Cin));
        const bool has_bias = bias.valid();
        if (has_bias) {
            const Node& nb = nodes_[bias.id()];
            if (nb.shape.numel() != Cout)
                throw DimensionError("conv2d: bias length " + std::to_string(nb.shape.numel()) +
                                     " != out channels " + std::to_string(Cout));
        }
        Shape osh = batched ? Shape{B, Cout, H, W} : Shape{Cout, H, W};
        Tensor<S> out = has_bias ? fresh3(osh, x, kernel, bias, "conv2d") : fresh(osh, x, kernel, "conv2d");
        Node& no = nodes_[out.id()];
        conv2d_forward(nx.value.data(), nk.value.data(),
                       has_bias ? nodes_[bias.id()].value.data() : nullptr, no.value.data(), B, Cin,
                       Cout, H, W, k3);
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, x, kernel, bias, out, B, Cin, Cout, H, W, k3, has_bias] {
                auto g = grad_buffer(out.id());
                const S* xv = nodes_[x.id()].value.data();
                const S* kv = nodes_[kernel.id()].value.data();
                if (nodes_[x.id()].requires_grad)
                    conv2d_backward_input(g.data(), kv, grad_buffer(x.id()).data(), B, Cin, Cout, H, W, k3);
                if (nodes_[kernel.id()].requires_grad)
                    conv2d_backward_kernel(g.data(), xv, grad_buffer(kernel.id()).data(), B, Cin, Cout, H, W, k3);
                if (has_bias && nodes_[bias.id()].requires_grad) {
                    auto gb = grad_buffer(bias.id());
                    const long plane = static_cast<long>(H) * W;
                    for (int b = 0; b < B; ++b)
                        for (int oc = 0; oc < Cout; ++oc) {
                            const S* gp = g.data() + (static_cast<long>(b) * Cout + oc) * plane;
                            S acc = S(0);
                            for (long p = 0; p < plane; ++p) acc += gp[p];
                            gb[oc] += acc;
                        }
                }
            };
        }
        return out;
    }

    Tensor<S> relu(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        Tensor<S> out = fresh(na.shape, a, "relu");
        Node& no = nodes_[out.id()];
        const long n = na.shape.numel();
        for (long i = 0; i < n; ++i) no.value[i] = na.value[i] > S(0) ? na.value[i] : S(0);
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                const auto& xv = nodes_[a.id()].value;
                // subgradient at 0 is 0
                for (size_t i = 0; i < g.size(); ++i)
                    if (xv[i] > S(0)) ga[i] += g[i];
            };
        }
        return out;
    }

    Tensor<S> tanh_op(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        Tensor<S> out = fresh(na.shape, a, "tanh");
        Node& no = nodes_[out.id()];
        const long n = na.shape.numel();
        for (long i = 0; i < n; ++i) no.value[i] = std::tanh(na.value[i]);
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                const auto& y = nodes_[out.id()].value;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (S(1) - y[i] * y[i]);
            };
        }
        return out;
    }

    Tensor<S> sigmoid(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        Tensor<S> out = fresh(na.shape, a, "sigmoid");
        Node& no = nodes_[out.id()];
        const long n = na.shape.numel();
        for (long i = 0; i < n; ++i) no.value[i] = stable_sigmoid(na.value[i]);
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                const auto& y = nodes_[out.id()].value;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (S(1) - y[i]);
            };
        }
        return out;
    }

    // Row-wise softmax with max subtraction.
    Tensor<S> softmax_rows(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        if (na.shape.rank() != 2)
            throw DimensionError("softmax_rows: expects a matrix, got " + na.shape.str());
        const int r = na.shape.dim(0), c = na.shape.dim(1);
        Tensor<S> out = fresh(na.shape, a, "softmax_rows");
        Node& no = nodes_[out.id()];
        for (int i = 0; i < r; ++i) {
            const S* row = na.value.data() + i * c;
            S* orow = no.value.data() + i * c;
            S mx = row[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            S denom = S(0);
            for (int j = 0; j < c; ++j) {
                orow[j] = std::exp(row[j] - mx);
                denom += orow[j];
            }
            for (int j = 0; j < c; ++j) orow[j] /= denom;
        }
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out, r, c] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                const auto& y = nodes_[out.id()].value;
                for (int i = 0; i < r; ++i) {
                    const S* yrow = y.data() + i * c;
                    const S* grow = g.data() + i * c;
                    S dot = S(0);
                    for (int j = 0; j < c; ++j) dot += yrow[j] * grow[j];
                    S* garow = ga.data() + i * c;
                    for (int j = 0; j < c; ++j) garow[j] += yrow[j] * (grow[j] - dot);
                }
            };
        }
        return out;
    }

    // Mean over all of CxHxW. Rank-3 input pools to one scalar; rank-4 input
    // pools each leading index to its own scalar (a length-B vector).
    Tensor<S> global_avg_pool(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        if (na.shape.rank() != 3 && na.shape.rank() != 4)
            throw DimensionError("global_avg_pool: expects CxHxW or BxCxHxW, got " + na.shape.str());
        const bool batched = na.shape.rank() == 4;
        const int B = batched ? na.shape.dim(0) : 1;
        const long per = na.shape.numel() / B;
        Tensor<S> out = fresh(batched ? Shape::vec(B) : Shape::scalar(), a, "global_avg_pool");
        Node& no = nodes_[out.id()];
        for (int b = 0; b < B; ++b) {
            const S* src = na.value.data() + b * per;
            S acc = S(0);
            for (long i = 0; i < per; ++i) acc += src[i];
            no.value[b] = acc / static_cast<S>(per);
        }
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out, B, per] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                for (int b = 0; b < B; ++b) {
                    const S gv = g[b] / static_cast<S>(per);
                    S* dst = ga.data() + b * per;
                    for (long i = 0; i < per; ++i) dst[i] += gv;
                }
            };
        }
        return out;
    }

    // Mean over HxW per (frame, channel): BxCxHxW -> BxC.
    Tensor<S> spatial_mean(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        if (na.shape.rank() != 4)
            throw DimensionError("spatial_mean: expects BxCxHxW, got " + na.shape.str());
        const int B = na.shape.dim(0), C = na.shape.dim(1);
        const long plane = static_cast<long>(na.shape.dim(2)) * na.shape.dim(3);
        Tensor<S> out = fresh(Shape::mat(B, C), a, "spatial_mean");
        Node& no = nodes_[out.id()];
        for (int b = 0; b < B; ++b)
            for (int ch = 0; ch < C; ++ch) {
                const S* src = na.value.data() + (static_cast<long>(b) * C + ch) * plane;
                S acc = S(0);
                for (long i = 0; i < plane; ++i) acc += src[i];
                no.value[b * C + ch] = acc / static_cast<S>(plane);
            }
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out, B, C, plane] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                for (int b = 0; b < B; ++b)
                    for (int ch = 0; ch < C; ++ch) {
                        const S gv = g[b * C + ch] / static_cast<S>(plane);
                        S* dst = ga.data() + (static_cast<long>(b) * C + ch) * plane;
                        for (long i = 0; i < plane; ++i) dst[i] += gv;
                    }
            };
        }
        return out;
    }

    // Mean over rows: r x c -> 1 x c.
    Tensor<S> mean_rows(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        if (na.shape.rank() != 2)
            throw DimensionError("mean_rows: expects a matrix, got " + na.shape.str());
        const int r = na.shape.dim(0), c = na.shape.dim(1);
        Tensor<S> out = fresh(Shape::mat(1, c), a, "mean_rows");
        Node& no = nodes_[out.id()];
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) no.value[j] += na.value[i * c + j];
        for (int j = 0; j < c; ++j) no.value[j] /= static_cast<S>(r);
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out, r, c] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) ga[i * c + j] += g[j] / static_cast<S>(r);
            };
        }
        return out;
    }

    // 2x2 average pooling, stride 2. H and W must be even.
    Tensor<S> avg_pool2x2(Tensor<S> a) {
        const Node& na = nodes_[a.id()];
        if (na.shape.rank() != 4)
            throw DimensionError("avg_pool2x2: expects BxCxHxW, got " + na.shape.str());
        const int B = na.shape.dim(0), C = na.shape.dim(1), H = na.shape.dim(2), W = na.shape.dim(3);
        if (H % 2 || W % 2)
            throw DimensionError("avg_pool2x2: H and W must be even, got " + na.shape.str());
        const int Ho = H / 2, Wo = W / 2;
        Tensor<S> out = fresh(Shape{B, C, Ho, Wo}, a, "avg_pool2x2");
        Node& no = nodes_[out.id()];
        for (int bc = 0; bc < B * C; ++bc) {
            const S* src = na.value.data() + static_cast<long>(bc) * H * W;
            S* dst = no.value.data() + static_cast<long>(bc) * Ho * Wo;
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x)
                    dst[y * Wo + x] = (src[(2 * y) * W + 2 * x] + src[(2 * y) * W + 2 * x + 1] +
                                       src[(2 * y + 1) * W + 2 * x] + src[(2 * y + 1) * W + 2 * x + 1]) *
                                      S(0.25);
        }
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, out, B, C, H, W, Ho, Wo] {
                auto g = grad_buffer(out.id());
                auto ga = grad_buffer(a.id());
                for (int bc = 0; bc < B * C; ++bc) {
                    const S* gs = g.data() + static_cast<long>(bc) * Ho * Wo;
                    S* dst = ga.data() + static_cast<long>(bc) * H * W;
                    for (int y = 0; y < Ho; ++y)
                        for (int x = 0; x < Wo; ++x) {
                            const S gv = gs[y * Wo + x] * S(0.25);
                            dst[(2 * y) * W + 2 * x] += gv;
                            dst[(2 * y) * W + 2 * x + 1] += gv;
                            dst[(2 * y + 1) * W + 2 * x] += gv;
                            dst[(2 * y + 1) * W + 2 * x + 1] += gv;
                        }
                }
            };
        }
        return out;
    }

    // Per-channel batch normalization over batch and spatial axes.
    // Training mode uses batch statistics and updates `stats` in place
    // (momentum 0.1, unbiased variance for the running estimate); eval mode
    // reads `stats`. Epsilon 1e-5.
    Tensor<S> batch_norm(Tensor<S> x, Tensor<S> gamma, Tensor<S> beta, BnStats<S>& stats, BnMode mode,
                         double momentum = 0.1, double eps = 1e-5) {
        const Node& nx = nodes_[x.id()];
        if (nx.shape.rank() != 4)
            throw DimensionError("batch_norm: expects BxCxHxW, got " + nx.shape.str());
        const int B = nx.shape.dim(0), C = nx.shape.dim(1), H = nx.shape.dim(2), W = nx.shape.dim(3);
        const long m = static_cast<long>(B) * H * W;
        if (nodes_[gamma.id()].shape.numel() != C || nodes_[beta.id()].shape.numel() != C)
            throw DimensionError("batch_norm: gamma/beta must have one entry per channel");
        if (static_cast<int>(stats.running_mean.size()) != C)
            throw DimensionError("batch_norm: stats sized for " +
                                 std::to_string(stats.running_mean.size()) + " channels, input has " +
                                 std::to_string(C));
        if (mode == BnMode::Training && m < 2)
            throw DegenerateStatsError("batch_norm: training mode needs B*H*W >= 2, got " +
                                       std::to_string(m));
        Tensor<S> out = fresh3(nx.shape, x, gamma, beta, "batch_norm");
        Node& no = nodes_[out.id()];
        const long plane = static_cast<long>(H) * W;
        std::vector<S> mean(C), ivar(C);
        const S* xv = nx.value.data();
        if (mode == BnMode::Training) {
            for (int ch = 0; ch < C; ++ch) {
                S acc = S(0);
                for (int b = 0; b < B; ++b) {
                    const S* p = xv + (static_cast<long>(b) * C + ch) * plane;
                    for (long i = 0; i < plane; ++i) acc += p[i];
                }
                const S mu = acc / static_cast<S>(m);
                S vacc = S(0);
                for (int b = 0; b < B; ++b) {
                    const S* p = xv + (static_cast<long>(b) * C + ch) * plane;
                    for (long i = 0; i < plane; ++i) {
                        const S d = p[i] - mu;
                        vacc += d * d;
                    }
                }
                const S var = vacc / static_cast<S>(m);
                mean[ch] = mu;
                ivar[ch] = S(1) / std::sqrt(var + static_cast<S>(eps));
                const S mom = static_cast<S>(momentum);
                const S unbiased = m > 1 ? vacc / static_cast<S>(m - 1) : var;
                stats.running_mean[ch] = (S(1) - mom) * stats.running_mean[ch] + mom * mu;
                stats.running_var[ch] = (S(1) - mom) * stats.running_var[ch] + mom * unbiased;
            }
        } else {
            for (int ch = 0; ch < C; ++ch) {
                mean[ch] = stats.running_mean[ch];
                ivar[ch] = S(1) / std::sqrt(stats.running_var[ch] + static_cast<S>(eps));
            }
        }
        const S* gv = nodes_[gamma.id()].value.data();
        const S* bv = nodes_[beta.id()].value.data();
        for (int b = 0; b < B; ++b)
            for (int ch = 0; ch < C; ++ch) {
                const S* p = xv + (static_cast<long>(b) * C + ch) * plane;
                S* q = no.value.data() + (static_cast<long>(b) * C + ch) * plane;
                const S mu = mean[ch], iv = ivar[ch], ga = gv[ch], be = bv[ch];
                for (long i = 0; i < plane; ++i) q[i] = (p[i] - mu) * iv * ga + be;
            }
        finish(out);
        if (no.requires_grad) {
            const bool training = mode == BnMode::Training;
            no.backward = [this, x, gamma, beta, out, B, C, plane, m, training, mean = std::move(mean),
                           ivar = std::move(ivar)] {
                auto g = grad_buffer(out.id());
                const S* xv = nodes_[x.id()].value.data();
                const S* gv = nodes_[gamma.id()].value.data();
                const bool need_dx = nodes_[x.id()].requires_grad;
                const bool need_dg = nodes_[gamma.id()].requires_grad;
                const bool need_db = nodes_[beta.id()].requires_grad;
                for (int ch = 0; ch < C; ++ch) {
                    const S mu = mean[ch], iv = ivar[ch];
                    S sum_dy = S(0), sum_dy_xhat = S(0);
                    for (int b = 0; b < B; ++b) {
                        const S* xp = xv + (static_cast<long>(b) * C + ch) * plane;
                        const S* gp = g.data() + (static_cast<long>(b) * C + ch) * plane;
                        for (long i = 0; i < plane; ++i) {
                            sum_dy += gp[i];
                            sum_dy_xhat += gp[i] * (xp[i] - mu) * iv;
                        }
                    }
                    if (need_dg) grad_buffer(gamma.id())[ch] += sum_dy_xhat;
                    if (need_db) grad_buffer(beta.id())[ch] += sum_dy;
                    if (!need_dx) continue;
                    auto gx = grad_buffer(x.id());
                    const S ga = gv[ch];
                    if (training) {
                        const S inv_m = S(1) / static_cast<S>(m);
                        for (int b = 0; b < B; ++b) {
                            const S* xp = xv + (static_cast<long>(b) * C + ch) * plane;
                            const S* gp = g.data() + (static_cast<long>(b) * C + ch) * plane;
                            S* dp = gx.data() + (static_cast<long>(b) * C + ch) * plane;
                            for (long i = 0; i < plane; ++i) {
                                const S xhat = (xp[i] - mu) * iv;
                                dp[i] += ga * iv * (gp[i] - inv_m * sum_dy - inv_m * xhat * sum_dy_xhat);
                            }
                        }
                    } else {
                        for (int b = 0; b < B; ++b) {
                            const S* gp = g.data() + (static_cast<long>(b) * C + ch) * plane;
                            S* dp = gx.data() + (static_cast<long>(b) * C + ch) * plane;
                            for (long i = 0; i < plane; ++i) dp[i] += ga * iv * gp[i];
                        }
                    }
                }
            };
        }
        return out;
    }

    // out[i][j][:] = u[i][:] + u[j][:] for every ordered pair (needed by the
    // additive similarity variant).
    Tensor<S> pairwise_row_sum(Tensor<S> u) {
        const Node& nu = nodes_[u.id()];
        if (nu.shape.rank() != 2)
            throw DimensionError("pairwise_row_sum: expects a matrix, got " + nu.shape.str());
        const int t = nu.shape.dim(0), d = nu.shape.dim(1);
        Tensor<S> out = fresh(Shape{t, t, d}, u, "pairwise_row_sum");
        Node& no = nodes_[out.id()];
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j) {
                const S* ri = nu.value.data() + i * d;
                const S* rj = nu.value.data() + j * d;
                S* o = no.value.data() + (static_cast<long>(i) * t + j) * d;
                for (int k = 0; k < d; ++k) o[k] = ri[k] + rj[k];
            }
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, u, out, t, d] {
                auto g = grad_buffer(out.id());
                auto gu = grad_buffer(u.id());
                for (int i = 0; i < t; ++i)
                    for (int j = 0; j < t; ++j) {
                        const S* gp = g.data() + (static_cast<long>(i) * t + j) * d;
                        S* gi = gu.data() + i * d;
                        S* gj = gu.data() + j * d;
                        for (int k = 0; k < d; ++k) {
                            gi[k] += gp[k];
                            gj[k] += gp[k];
                        }
                    }
            };
        }
        return out;
    }

    // Broadcast multiply of a matrix by a scalar (1-element) or per-column
    // (length-c) weight tensor; used for the aggregator score w' * z'.
    Tensor<S> mul_bcast(Tensor<S> a, Tensor<S> w) {
        check_same_tape(a, w);
        const Node& na = nodes_[a.id()];
        const Node& nw = nodes_[w.id()];
        if (na.shape.rank() != 2)
            throw DimensionError("mul_bcast: expects a matrix, got " + na.shape.str());
        const int r = na.shape.dim(0), c = na.shape.dim(1);
        const long wn = nw.shape.numel();
        if (wn != 1 && wn != c)
            throw DimensionError("mul_bcast: weight must be scalar or per-column, got " + nw.shape.str());
        Tensor<S> out = fresh(na.shape, a, w, "mul_bcast");
        Node& no = nodes_[out.id()];
        const S* wv = nw.value.data();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                no.value[i * c + j] = na.value[i * c + j] * (wn == 1 ? wv[0] : wv[j]);
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, a, w, out, r, c, wn] {
                auto g = grad_buffer(out.id());
                const S* av = nodes_[a.id()].value.data();
                const S* wv = nodes_[w.id()].value.data();
                if (nodes_[a.id()].requires_grad) {
                    auto ga = grad_buffer(a.id());
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < c; ++j)
                            ga[i * c + j] += g[i * c + j] * (wn == 1 ? wv[0] : wv[j]);
                }
                if (nodes_[w.id()].requires_grad) {
                    auto gw = grad_buffer(w.id());
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < c; ++j) {
                            const S gv = g[i * c + j] * av[i * c + j];
                            gw[wn == 1 ? 0 : j] += gv;
                        }
                }
            };
        }
        return out;
    }

    // Convex per-node mixture of head outputs: heads are N tensors of equal
    // shape TxCxHxW, weights is TxN; out[t] = sum_k weights[t][k]*heads[k][t].
    Tensor<S> head_mix(const std::vector<Tensor<S>>& heads, Tensor<S> weights) {
        if (heads.empty()) throw DimensionError("head_mix: needs at least one head");
        const int N = static_cast<int>(heads.size());
        const Shape hsh = nodes_[heads[0].id()].shape;
        if (hsh.rank() != 4) throw DimensionError("head_mix: heads must be TxCxHxW, got " + hsh.str());
        for (const auto& h : heads)
            if (nodes_[h.id()].shape != hsh)
                throw DimensionError("head_mix: head shape mismatch " + nodes_[h.id()].shape.str() +
                                     " vs " + hsh.str());
        const int T = hsh.dim(0);
        const long per = hsh.numel() / T;
        const Node& nw = nodes_[weights.id()];
        if (nw.shape != Shape::mat(T, N))
            throw DimensionError("head_mix: weights must be " + Shape::mat(T, N).str() + ", got " +
                                 nw.shape.str());
        bool req = nw.requires_grad;
        for (const auto& h : heads) req = req || nodes_[h.id()].requires_grad;
        Tensor<S> out = alloc_node(hsh, req, "head_mix");
        Node& no = nodes_[out.id()];
        for (int t = 0; t < T; ++t) {
            S* dst = no.value.data() + t * per;
            for (int k = 0; k < N; ++k) {
                const S wv = nw.value[t * N + k];
                const S* src = nodes_[heads[k].id()].value.data() + t * per;
                for (long i = 0; i < per; ++i) dst[i] += wv * src[i];
            }
        }
        finish(out);
        if (req) {
            no.backward = [this, heads, weights, out, T, N, per] {
                auto g = grad_buffer(out.id());
                const S* wv = nodes_[weights.id()].value.data();
                const bool need_dw = nodes_[weights.id()].requires_grad;
                for (int k = 0; k < N; ++k) {
                    const bool need_dh = nodes_[heads[k].id()].requires_grad;
                    if (!need_dh && !need_dw) continue;
                    const S* hv = nodes_[heads[k].id()].value.data();
                    for (int t = 0; t < T; ++t) {
                        const S* gp = g.data() + t * per;
                        if (need_dh) {
                            S* dh = grad_buffer(heads[k].id()).data() + t * per;
                            const S w = wv[t * N + k];
                            for (long i = 0; i < per; ++i) dh[i] += w * gp[i];
                        }
                        if (need_dw) {
                            const S* hp = hv + t * per;
                            S acc = S(0);
                            for (long i = 0; i < per; ++i) acc += hp[i] * gp[i];
                            grad_buffer(weights.id())[t * N + k] += acc;
                        }
                    }
                }
            };
        }
        return out;
    }

    // Stack N equal-length vectors as the columns of a T x N matrix.
    Tensor<S> stack_cols(const std::vector<Tensor<S>>& cols) {
        if (cols.empty()) throw DimensionError("stack_cols: needs at least one column");
        const int T = static_cast<int>(nodes_[cols[0].id()].shape.numel());
        const int N = static_cast<int>(cols.size());
        bool req = false;
        for (const auto& c : cols) {
            if (nodes_[c.id()].shape.numel() != T)
                throw DimensionError("stack_cols: column length mismatch");
            req = req || nodes_[c.id()].requires_grad;
        }
        Tensor<S> out = alloc_node(Shape::mat(T, N), req, "stack_cols");
        Node& no = nodes_[out.id()];
        for (int k = 0; k < N; ++k) {
            const auto& v = nodes_[cols[k].id()].value;
            for (int t = 0; t < T; ++t) no.value[t * N + k] = v[t];
        }
        finish(out);
        if (req) {
            no.backward = [this, cols, out, T, N] {
                auto g = grad_buffer(out.id());
                for (int k = 0; k < N; ++k) {
                    if (!nodes_[cols[k].id()].requires_grad) continue;
                    auto gc = grad_buffer(cols[k].id());
                    for (int t = 0; t < T; ++t) gc[t] += g[t * N + k];
                }
            };
        }
        return out;
    }

    // Concatenate along the channel axis: inputs TxC_i x H x W.
    Tensor<S> concat_channels(const std::vector<Tensor<S>>& xs) {
        if (xs.empty()) throw DimensionError("concat_channels: needs at least one input");
        const Shape s0 = nodes_[xs[0].id()].shape;
        if (s0.rank() != 4) throw DimensionError("concat_channels: expects TxCxHxW inputs");
        const int T = s0.dim(0), H = s0.dim(2), W = s0.dim(3);
        int Ctot = 0;
        bool req = false;
        for (const auto& x : xs) {
            const Shape& s = nodes_[x.id()].shape;
            if (s.rank() != 4 || s.dim(0) != T || s.dim(2) != H || s.dim(3) != W)
                throw DimensionError("concat_channels: incompatible input " + s.str());
            Ctot += s.dim(1);
            req = req || nodes_[x.id()].requires_grad;
        }
        Tensor<S> out = alloc_node(Shape{T, Ctot, H, W}, req, "concat_channels");
        Node& no = nodes_[out.id()];
        const long plane = static_cast<long>(H) * W;
        for (int t = 0; t < T; ++t) {
            long coff = 0;
            for (const auto& x : xs) {
                const Node& nx = nodes_[x.id()];
                const int c = nx.shape.dim(1);
                std::memcpy(no.value.data() + (static_cast<long>(t) * Ctot + coff) * plane,
                            nx.value.data() + static_cast<long>(t) * c * plane,
                            sizeof(S) * c * plane);
                coff += c;
            }
        }
        finish(out);
        if (req) {
            no.backward = [this, xs, out, T, Ctot, plane] {
                auto g = grad_buffer(out.id());
                for (int t = 0; t < T; ++t) {
                    long coff = 0;
                    for (const auto& x : xs) {
                        const int c = nodes_[x.id()].shape.dim(1);
                        if (nodes_[x.id()].requires_grad) {
                            auto gx = grad_buffer(x.id());
                            const S* src = g.data() + (static_cast<long>(t) * Ctot + coff) * plane;
                            S* dst = gx.data() + static_cast<long>(t) * c * plane;
                            for (long i = 0; i < c * plane; ++i) dst[i] += src[i];
                        }
                        coff += c;
                    }
                }
            };
        }
        return out;
    }

    // Single-label cross entropy: -s_g + log sum_j exp(s_j), max-stabilized.
    Tensor<S> cross_entropy(Tensor<S> logits, int true_class) {
        const Node& nl = nodes_[logits.id()];
        const long K = nl.shape.numel();
        if (true_class < 0 || true_class >= K)
            throw ContractError("cross_entropy: class " + std::to_string(true_class) +
                                " out of range [0, " + std::to_string(K) + ")");
        Tensor<S> out = fresh(Shape::scalar(), logits, "cross_entropy");
        Node& no = nodes_[out.id()];
        const S* s = nl.value.data();
        S mx = s[0];
        for (long j = 1; j < K; ++j) mx = std::max(mx, s[j]);
        S denom = S(0);
        for (long j = 0; j < K; ++j) denom += std::exp(s[j] - mx);
        no.value[0] = -(s[true_class] - mx) + std::log(denom);
        finish(out);
        if (no.requires_grad) {
            no.backward = [this, logits, out, true_class, K] {
                const S g = grad_buffer(out.id())[0];
                auto gl = grad_buffer(logits.id());
                const S* s = nodes_[logits.id()].value.data();
                S mx = s[0];
                for (long j = 1; j < K; ++j) mx = std::max(mx, s[j]);
                S denom = S(0);
                for (long j = 0; j < K; ++j) denom += std::exp(s[j] - mx);
                for (long j = 0; j < K; ++j) {
                    const S p = std::exp(s[j] - mx) / denom;
                    gl[j] += g * (p - (j == true_class ? S(1) : S(0)));
                }
            };
        }
        return out;
    }

    // Multi-label binary sigmoid loss, summed over classes, in the stable
    // max(s,0) - s*y + log(1+exp(-|s|)) form.
    Tensor<S> binary_sigmoid_loss(Tensor<S> logits, std::span<const uint8_t> labels) {
        const Node& nl = nodes_[logits.id()];
        const long K = nl.shape.numel();
        if (static_cast<long>(labels.size()) != K)
            throw DimensionError("binary_sigmoid_loss: " + std::to_string(labels.size()) +
                                 " labels for " + std::to_string(K) + " logits");
        for (uint8_t y : labels)
            if (y > 1) throw ContractError("binary_sigmoid_loss: labels must be 0 or 1");
        Tensor<S> out = fresh(Shape::scalar(), logits, "binary_sigmoid_loss");
        Node& no = nodes_[out.id()];
        const S* s = nl.value.data();
        S acc = S(0);
        for (long j = 0; j < K; ++j) {
            const S sj = s[j];
            acc += std::max(sj, S(0)) - sj * static_cast<S>(labels[j]) +
                   std::log1p(std::exp(-std::abs(sj)));
        }
        no.value[0] = acc;
        finish(out);
        if (no.requires_grad) {
            std::vector<uint8_t> yc(labels.begin(), labels.end());
            no.backward = [this, logits, out, K, yc = std::move(yc)] {
                const S g = grad_buffer(out.id())[0];
                auto gl = grad_buffer(logits.id());
                const S* s = nodes_[logits.id()].value.data();
                for (long j = 0; j < K; ++j)
                    gl[j] += g * (stable_sigmoid(s[j]) - static_cast<S>(yc[j]));
            };
        }
        return out;
    }

  private:
    friend class Tensor<S>;

    std::deque<Node> nodes_;

    static S stable_sigmoid(S x) {
        if (x >= S(0)) {
            const S e = std::exp(-x);
            return S(1) / (S(1) + e);
        }
        const S e = std::exp(x);
        return e / (S(1) + e);
    }

    void check_same_tape(Tensor<S> a, Tensor<S> b) const {
        if (a.tape() != this || b.tape() != this)
            throw ContractError("op: operands belong to different tapes");
    }

    Tensor<S> make_leaf(const Shape& sh, std::span<const S> v, bool requires_grad, S* grad_ext) {
        if (static_cast<long>(v.size()) != sh.numel())
            throw DimensionError("leaf: " + std::to_string(v.size()) + " values for shape " + sh.str());
        Node n;
        n.shape = sh;
        n.value.assign(v.begin(), v.end());
        n.requires_grad = requires_grad;
        n.grad_ext = grad_ext;
        n.op = "leaf";
        nodes_.push_back(std::move(n));
        return Tensor<S>(this, static_cast<int>(nodes_.size()) - 1);
    }

    Tensor<S> alloc_node(const Shape& sh, bool requires_grad, const char* op) {
        Node n;
        n.shape = sh;
        n.value.assign(sh.numel(), S(0));
        n.requires_grad = requires_grad;
        n.op = op;
        nodes_.push_back(std::move(n));
        return Tensor<S>(this, static_cast<int>(nodes_.size()) - 1);
    }

    Tensor<S> fresh(const Shape& sh, Tensor<S> a, const char* op) {
        return alloc_node(sh, nodes_[a.id()].requires_grad, op);
    }
    Tensor<S> fresh(const Shape& sh, Tensor<S> a, Tensor<S> b, const char* op) {
        return alloc_node(sh, nodes_[a.id()].requires_grad || nodes_[b.id()].requires_grad, op);
    }
    Tensor<S> fresh3(const Shape& sh, Tensor<S> a, Tensor<S> b, Tensor<S> c, const char* op) {
        bool req = nodes_[a.id()].requires_grad || nodes_[b.id()].requires_grad;
        if (c.valid()) req = req || nodes_[c.id()].requires_grad;
        return alloc_node(sh, req, op);
    }

    void finish(Tensor<S> out) {
        if (!check_finite) return;
        const Node& n = nodes_[out.id()];
        for (S v : n.value)
            if (!std::isfinite(v))
                throw NumericError(std::string("non-finite value produced by op '") + n.op + "'");
    }

    // ---- convolution kernels -------------------------------------------------

    void conv2d_forward(const S* x, const S* k, const S* bias, S* y, int B, int Cin, int Cout, int H,
                        int W, bool k3) {
        const long plane = static_cast<long>(H) * W;
        for (int b = 0; b < B; ++b) {
            const S* xb = x + static_cast<long>(b) * Cin * plane;
            S* yb = y + static_cast<long>(b) * Cout * plane;
            if (bias)
                for (int oc = 0; oc < Cout; ++oc) {
                    S* yp = yb + oc * plane;
                    for (long i = 0; i < plane; ++i) yp[i] = bias[oc];
                }
            for (int oc = 0; oc < Cout; ++oc) {
                S* yp = yb + oc * plane;
                for (int ic = 0; ic < Cin; ++ic) {
                    const S* xp = xb + ic * plane;
                    if (!k3) {
                        const S kv = k[oc * Cin + ic];
                        for (long i = 0; i < plane; ++i) yp[i] += kv * xp[i];
                        continue;
                    }
                    const S* kp = k + (static_cast<long>(oc) * Cin + ic) * 9;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const S kv = kp[(dy + 1) * 3 + (dx + 1)];
                            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                            for (int yy = y0; yy < y1; ++yy) {
                                S* yrow = yp + yy * W;
                                const S* xrow = xp + (yy + dy) * W + dx;
                                for (int xx = x0; xx < x1; ++xx) yrow[xx] += kv * xrow[xx];
                            }
                        }
                }
            }
        }
    }

    void conv2d_backward_input(const S* gy, const S* k, S* gx, int B, int Cin, int Cout, int H, int W,
                               bool k3) {
        const long plane = static_cast<long>(H) * W;
        for (int b = 0; b < B; ++b) {
            const S* gyb = gy + static_cast<long>(b) * Cout * plane;
            S* gxb = gx + static_cast<long>(b) * Cin * plane;
            for (int oc = 0; oc < Cout; ++oc) {
                const S* gp = gyb + oc * plane;
                for (int ic = 0; ic < Cin; ++ic) {
                    S* xp = gxb + ic * plane;
                    if (!k3) {
                        const S kv = k[oc * Cin + ic];
                        for (long i = 0; i < plane; ++i) xp[i] += kv * gp[i];
                        continue;
                    }
                    const S* kp = k + (static_cast<long>(oc) * Cin + ic) * 9;
                    // gx[y+dy][x+dx] += k[dy][dx] * gy[y][x]
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const S kv = kp[(dy + 1) * 3 + (dx + 1)];
                            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                            for (int yy = y0; yy < y1; ++yy) {
                                const S* grow = gp + yy * W;
                                S* xrow = xp + (yy + dy) * W + dx;
                                for (int xx = x0; xx < x1; ++xx) xrow[xx] += kv * grow[xx];
                            }
                        }
                }
            }
        }
    }

    void conv2d_backward_kernel(const S* gy, const S* x, S* gk, int B, int Cin, int Cout, int H, int W,
                                bool k3) {
        const long plane = static_cast<long>(H) * W;
        for (int b = 0; b < B; ++b) {
            const S* gyb = gy + static_cast<long>(b) * Cout * plane;
            const S* xb = x + static_cast<long>(b) * Cin * plane;
            for (int oc = 0; oc < Cout; ++oc) {
                const S* gp = gyb + oc * plane;
                for (int ic = 0; ic < Cin; ++ic) {
                    const S* xp = xb + ic * plane;
                    if (!k3) {
                        S acc = S(0);
                        for (long i = 0; i < plane; ++i) acc += gp[i] * xp[i];
                        gk[oc * Cin + ic] += acc;
                        continue;
                    }
                    S* kp = gk + (static_cast<long>(oc) * Cin + ic) * 9;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                            S acc = S(0);
                            for (int yy = y0; yy < y1; ++yy) {
                                const S* grow = gp + yy * W;
                                const S* xrow = xp + (yy + dy) * W + dx;
                                for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * xrow[xx];
                            }
                            kp[(dy + 1) * 3 + (dx + 1)] += acc;
                        }
                }
            }
        }
    }
};

// ---- Tensor method definitions ------------------------------------------------

template <typename S>
const Shape& Tensor<S>::shape() const {
    return tape_->node(id_).shape;
}
template <typename S>
std::span<const S> Tensor<S>::values() const {
    return tape_->node(id_).value;
}
template <typename S>
std::span<const S> Tensor<S>::grad() const {
    const auto& n = tape_->node(id_);
    if (n.grad_ext) return {n.grad_ext, static_cast<size_t>(n.shape.numel())};
    return n.grad;
}
template <typename S>
bool Tensor<S>::requires_grad() const {
    return tape_->node(id_).requires_grad;
}
template <typename S>
S Tensor<S>::item() const {
    const auto& n = tape_->node(id_);
    if (n.shape.numel() != 1)
        throw ContractError("item(): tensor has " + std::to_string(n.shape.numel()) + " elements");
    return n.value[0];
}

}  // namespace trg
