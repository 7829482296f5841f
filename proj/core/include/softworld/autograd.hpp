#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "softworld/tensor.hpp"

namespace softworld::ag {

/// Named trainable tensor. Gradients accumulate across Tape::backward calls
/// until zero_grad; names must be unique within a model.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter(std::string name_, Tensor value_)
        : name(std::move(name_)), value(std::move(value_)), grad(Tensor::zeros(value.shape())) {}

    void zero_grad() { grad.zero(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; invalid when default-constructed.
class Var {
public:
    Var() = default;
    bool defined() const { return tape_ != nullptr; }
    const Tensor& val() const;
    /// Gradient of the last backward pass w.r.t. this node (zeros if unused).
    Tensor grad() const;
    Tape* tape() const { return tape_; }
    int index() const { return idx_; }

private:
    friend class Tape;
    Var(Tape* t, int i) : tape_(t), idx_(i) {}
    Tape* tape_ = nullptr;
    int idx_ = -1;
};

/// Define-by-run reverse-mode tape. A tape is single-threaded; build the
/// forward computation with the free-function ops below, then call backward
/// on a scalar loss to populate Parameter::grad.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    int size() const { return static_cast<int>(nodes_.size()); }

    /// Constant leaf (no gradient).
    Var input(Tensor value);
    /// Trainable leaf; backward accumulates into p.grad.
    Var param(Parameter& p);
    /// Leaf carrying a parameter's value with gradients blocked.
    Var frozen(const Parameter& p) { return input(p.value); }

    /// Reverse sweep from a scalar loss. Throws UsageError if loss is not
    /// scalar, TrainingError if it is non-finite.
    void backward(Var loss);

    // --- internals used by the op implementations ---
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        Parameter* bound_param = nullptr;
        std::function<void(Tape&)> backward_fn;
    };
    Node& node(int i) { return nodes_[static_cast<size_t>(i)]; }
    const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
    Var emit(Tensor value, bool requires_grad, std::function<void(Tape&)> backward_fn);
    Tensor& grad_ref(int i);

private:
    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

/// Directed edge; messages flow src -> dst.
struct Edge {
    int32_t src = 0;
    int32_t dst = 0;
};

// ---------------------------------------------------------------------------
// Elementwise / arithmetic
// ---------------------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var minimum(Var a, Var b);  // ties route gradient to a
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
inline Var neg(Var a) { return scale(a, -1.0); }
Var tanh(Var a);
Var gelu(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

/// Elementwise product with a non-differentiable tensor ([same shape] or
/// [1,d] broadcast over rows).
Var mul_const(Var a, Tensor c);
/// Row-broadcast add of a non-differentiable [1,d] tensor.
Var add_const(Var a, Tensor c);

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------
Var matmul(Var a, Var b);
/// y = x W + b with b broadcast across rows ([d_out] or [1,d_out]).
Var affine(Var x, Var w, Var b);
/// x + b with b broadcast across rows.
Var add_rowvec(Var x, Var b);

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------
Var reshape(Var a, std::vector<int64_t> shape);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, int64_t c0, int64_t c1);
Var slice_rows(Var a, int64_t r0, int64_t r1);
Var repeat_rows(Var a, int64_t n);  // [1,d] -> [n,d]
/// T parts of shape [B,d] -> [B,T,d] with out[b,t,:] = parts[t][b,:].
Var stack_time(std::span<const Var> steps);
Var detach(Var a);

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------
Var sum_all(Var a);   // -> [1]
Var mean_all(Var a);  // -> [1]
Var row_sum(Var a);   // [n,d] -> [n,1]
Var mean_rows(Var a); // [n,d] -> [1,d]
/// Mean over row ranges [r0,r1) -> one output row per range.
Var segment_mean_rows(Var a, std::span<const std::pair<int64_t, int64_t>> ranges);
/// Mean over explicit row index groups -> one output row per group.
Var group_mean_rows(Var a, std::span<const std::vector<int64_t>> groups);
/// Per-row constant multiply: out[r,:] = x[r,:] * factors[r].
Var scale_rows(Var a, std::vector<double> factors);

// ---------------------------------------------------------------------------
// Network blocks
// ---------------------------------------------------------------------------
/// Per-row normalization to zero mean / unit variance (eps-stabilized),
/// then y = gain * xhat + bias.
Var layer_norm(Var x, Var gain, Var bias, double eps);

/// Multi-head scaled dot-product self-attention with a strict causal mask
/// and output projection. x is [T,d] or [B,T,d]; wqkv [d,3d], wo [d,d].
Var causal_attention(Var x, Var wqkv, Var bqkv, Var wo, Var bo, int heads);

/// Graph convolution: out[i] = tanh(x[i] Ws + mean_{j->i} x[j] Wn [+ bias]).
/// Nodes without in-neighbors use only the self term.
Var message_pass(Var x, std::span<const Edge> edges, Var w_self, Var w_neigh);
Var message_pass(Var x, std::span<const Edge> edges, Var w_self, Var w_neigh, Var bias);

/// Bipartite mean aggregation: out[i] = mean_{(j->i)} x[j], i in [0,n_dst).
Var neighbor_mean(Var x, std::span<const Edge> edges, int64_t n_dst);

}  // namespace softworld::ag
