#include "softworld/autograd.hpp"

#include <cmath>
#include <utility>

#include "softworld/errors.hpp"

namespace softworld::ag {

namespace {

constexpr double kSqrt2Inv = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

Tape* require_same_tape(Var a, Var b) {
    if (!a.defined() || !b.defined() || a.tape() != b.tape()) {
        throw UsageError("operands must live on the same tape");
    }
    return a.tape();
}

void require_defined(Var a) {
    if (!a.defined()) throw UsageError("operation on an undefined Var");
}

}  // namespace

const Tensor& Var::val() const {
    if (!defined()) throw UsageError("val() on an undefined Var");
    return tape_->node(idx_).value;
}

Tensor Var::grad() const {
    if (!defined()) throw UsageError("grad() on an undefined Var");
    const Tape::Node& n = tape_->node(idx_);
    if (!n.has_grad) return Tensor::zeros(n.value.shape());
    return n.grad;
}

Var Tape::input(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor(), false, false, nullptr, nullptr});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
    nodes_.push_back(Node{p.value, Tensor(), grad_enabled_, false, grad_enabled_ ? &p : nullptr, nullptr});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::emit(Tensor value, bool requires_grad, std::function<void(Tape&)> backward_fn) {
    const bool rg = requires_grad && grad_enabled_;
    nodes_.push_back(Node{std::move(value), Tensor(), rg, false, nullptr, rg ? std::move(backward_fn) : nullptr});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Tape::grad_ref(int i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (!grad_enabled_) throw UsageError("backward on a grad-disabled tape");
    if (!loss.defined() || loss.tape() != this) throw UsageError("loss does not belong to this tape");
    const Node& ln = node(loss.index());
    if (ln.value.size() != 1) throw UsageError("backward requires a scalar loss");
    if (!std::isfinite(ln.value[0])) throw TrainingError("non-finite loss");

    grad_ref(loss.index())[0] += 1.0;
    for (int i = loss.index(); i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.has_grad && n.backward_fn) n.backward_fn(*this);
    }
    for (int i = 0; i <= loss.index(); ++i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.bound_param != nullptr && n.has_grad) {
            double* g = n.bound_param->grad.data();
            const double* src = n.grad.data();
            for (int64_t k = 0; k < n.grad.size(); ++k) g[k] += src[k];
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
    Tape& t = *require_same_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    const int ai = a.index(), bi = b.index();
    const bool rg = t.node(ai).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, bi, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        if (tp.node(ai).requires_grad) {
            Tensor& ga = tp.grad_ref(ai);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.node(bi).requires_grad) {
            Tensor& gb = tp.grad_ref(bi);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    };
    return y;
}

Var sub(Var a, Var b) {
    Tape& t = *require_same_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) throw ShapeError("sub: shape mismatch");
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    const int ai = a.index(), bi = b.index();
    const bool rg = t.node(ai).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, bi, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        if (tp.node(ai).requires_grad) {
            Tensor& ga = tp.grad_ref(ai);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.node(bi).requires_grad) {
            Tensor& gb = tp.grad_ref(bi);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    };
    return y;
}

Var mul(Var a, Var b) {
    Tape& t = *require_same_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    const int ai = a.index(), bi = b.index();
    const bool rg = t.node(ai).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, bi, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        const Tensor& av2 = tp.node(ai).value;
        const Tensor& bv2 = tp.node(bi).value;
        if (tp.node(ai).requires_grad) {
            Tensor& ga = tp.grad_ref(ai);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (tp.node(bi).requires_grad) {
            Tensor& gb = tp.grad_ref(bi);
            for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
        }
    };
    return y;
}

Var minimum(Var a, Var b) {
    Tape& t = *require_same_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) throw ShapeError("minimum: shape mismatch");
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] <= bv[i] ? av[i] : bv[i];
    const int ai = a.index(), bi = b.index();
    const bool rg = t.node(ai).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, bi, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        const Tensor& av2 = tp.node(ai).value;
        const Tensor& bv2 = tp.node(bi).value;
        for (int64_t i = 0; i < g.size(); ++i) {
            if (av2[i] <= bv2[i]) {
                if (tp.node(ai).requires_grad) tp.grad_ref(ai)[i] += g[i];
            } else {
                if (tp.node(bi).requires_grad) tp.grad_ref(bi)[i] += g[i];
            }
        }
    };
    return y;
}

Var scale(Var a, double c) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, c](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    };
    return y;
}

Var add_scalar(Var a, double c) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return y;
}

namespace {

template <typename F, typename DF>
Var pointwise(Var a, F f, DF df_from_in_out) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    Tensor out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, df_from_in_out](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        const Tensor& x = tp.node(ai).value;
        const Tensor& o = tp.node(yi).value;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df_from_in_out(x[i], o[i]);
    };
    return y;
}

}  // namespace

Var tanh(Var a) {
    return pointwise(a, [](double x) { return std::tanh(x); },
                     [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
    return pointwise(a,
                     [](double x) { return 0.5 * x * (1.0 + std::erf(x * kSqrt2Inv)); },
                     [](double x, double) {
                         const double cdf = 0.5 * (1.0 + std::erf(x * kSqrt2Inv));
                         const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                         return cdf + x * pdf;
                     });
}

Var relu(Var a) {
    return pointwise(a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
    return pointwise(a, [](double x) { return std::exp(x); },
                     [](double, double y) { return y; });
}

Var log(Var a) {
    return pointwise(a, [](double x) { return std::log(x); },
                     [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
    return pointwise(a, [](double x) { return x * x; },
                     [](double x, double) { return 2.0 * x; });
}

Var mul_const(Var a, Tensor c) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const bool row_broadcast = !av.same_shape(c);
    if (row_broadcast && (c.rows() != 1 || c.cols() != av.cols())) {
        throw ShapeError("mul_const: constant must match shape or be a [1,d] row");
    }
    Tensor out(av.shape());
    const int64_t n = av.rows(), d = av.cols();
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < d; ++j) {
            out[r * d + j] = av[r * d + j] * (row_broadcast ? c[j] : c[r * d + j]);
        }
    }
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, c = std::move(c), row_broadcast, n, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t r = 0; r < n; ++r) {
            for (int64_t j = 0; j < d; ++j) {
                ga[r * d + j] += g[r * d + j] * (row_broadcast ? c[j] : c[r * d + j]);
            }
        }
    };
    return y;
}

Var add_const(Var a, Tensor c) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const bool row_broadcast = !av.same_shape(c);
    if (row_broadcast && (c.rows() != 1 || c.cols() != av.cols())) {
        throw ShapeError("add_const: constant must match shape or be a [1,d] row");
    }
    Tensor out(av.shape());
    const int64_t n = av.rows(), d = av.cols();
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < d; ++j) {
            out[r * d + j] = av[r * d + j] + (row_broadcast ? c[j] : c[r * d + j]);
        }
    }
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return y;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = *require_same_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions differ");
    Tensor out({av.rows(), bv.cols()});
    gemm_nn(av, bv, out);
    const int ai = a.index(), bi = b.index();
    const bool rg = t.node(ai).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, bi, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        if (tp.node(ai).requires_grad) gemm_nt(g, tp.node(bi).value, tp.grad_ref(ai));
        if (tp.node(bi).requires_grad) gemm_tn(tp.node(ai).value, g, tp.grad_ref(bi));
    };
    return y;
}

Var add_rowvec(Var x, Var b) {
    Tape& t = *require_same_tape(x, b);
    const Tensor& xv = x.val();
    const Tensor& bv = b.val();
    if (bv.size() != xv.cols()) throw ShapeError("add_rowvec: bias width mismatch");
    Tensor out(xv.shape());
    const int64_t n = xv.rows(), d = xv.cols();
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] + bv[j];
    }
    const int xi = x.index(), bi = b.index();
    const bool rg = t.node(xi).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [xi, bi, yi, n, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        if (tp.node(xi).requires_grad) {
            Tensor& gx = tp.grad_ref(xi);
            for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (tp.node(bi).requires_grad) {
            Tensor& gb = tp.grad_ref(bi);
            for (int64_t r = 0; r < n; ++r) {
                for (int64_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
        }
    };
    return y;
}

Var affine(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

Var reshape(Var a, std::vector<int64_t> shape) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    Tensor out(std::move(shape), std::vector<double>(av.values().begin(), av.values().end()));
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return y;
}

Var concat_cols(Var a, Var b) {
    Tape& t = *require_same_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row count mismatch");
    const int64_t n = av.rows(), p = av.cols(), q = bv.cols();
    Tensor out({n, p + q});
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < p; ++j) out[r * (p + q) + j] = av[r * p + j];
        for (int64_t j = 0; j < q; ++j) out[r * (p + q) + p + j] = bv[r * q + j];
    }
    const int ai = a.index(), bi = b.index();
    const bool rg = t.node(ai).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, bi, yi, n, p, q](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        if (tp.node(ai).requires_grad) {
            Tensor& ga = tp.grad_ref(ai);
            for (int64_t r = 0; r < n; ++r)
                for (int64_t j = 0; j < p; ++j) ga[r * p + j] += g[r * (p + q) + j];
        }
        if (tp.node(bi).requires_grad) {
            Tensor& gb = tp.grad_ref(bi);
            for (int64_t r = 0; r < n; ++r)
                for (int64_t j = 0; j < q; ++j) gb[r * q + j] += g[r * (p + q) + p + j];
        }
    };
    return y;
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw UsageError("concat_rows: empty part list");
    Tape& t = *parts[0].tape();
    int64_t total = 0;
    const int64_t d = parts[0].val().cols();
    bool rg = false;
    for (const Var& p : parts) {
        if (p.tape() != &t) throw UsageError("concat_rows: mixed tapes");
        if (p.val().cols() != d) throw ShapeError("concat_rows: column mismatch");
        total += p.val().rows();
        rg = rg || t.node(p.index()).requires_grad;
    }
    Tensor out({total, d});
    int64_t r0 = 0;
    std::vector<std::pair<int, int64_t>> layout;  // (node index, starting row)
    layout.reserve(parts.size());
    for (const Var& p : parts) {
        const Tensor& pv = p.val();
        for (int64_t i = 0; i < pv.size(); ++i) out[r0 * d + i] = pv[i];
        layout.emplace_back(p.index(), r0);
        r0 += pv.rows();
    }
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [layout = std::move(layout), yi, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        for (const auto& [pi, start] : layout) {
            if (!tp.node(pi).requires_grad) continue;
            Tensor& gp = tp.grad_ref(pi);
            for (int64_t i = 0; i < gp.size(); ++i) gp[i] += g[start * d + i];
        }
    };
    return y;
}

Var slice_cols(Var a, int64_t c0, int64_t c1) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const int64_t n = av.rows(), d = av.cols();
    if (c0 < 0 || c1 > d || c0 >= c1) throw ShapeError("slice_cols: bad range");
    Tensor out({n, c1 - c0});
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = c0; j < c1; ++j) out[r * (c1 - c0) + (j - c0)] = av[r * d + j];
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, c0, c1, n, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = c0; j < c1; ++j) ga[r * d + j] += g[r * (c1 - c0) + (j - c0)];
    };
    return y;
}

Var slice_rows(Var a, int64_t r0, int64_t r1) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const int64_t n = av.rows(), d = av.cols();
    if (r0 < 0 || r1 > n || r0 >= r1) throw ShapeError("slice_rows: bad range");
    Tensor out({r1 - r0, d});
    for (int64_t i = 0; i < out.size(); ++i) out[i] = av[r0 * d + i];
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, r0, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t i = 0; i < g.size(); ++i) ga[r0 * d + i] += g[i];
    };
    return y;
}

Var repeat_rows(Var a, int64_t n) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    if (av.rows() != 1) throw ShapeError("repeat_rows: input must have one row");
    const int64_t d = av.cols();
    Tensor out({n, d});
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < d; ++j) out[r * d + j] = av[j];
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, n, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d; ++j) ga[j] += g[r * d + j];
    };
    return y;
}

Var stack_time(std::span<const Var> steps) {
    if (steps.empty()) throw UsageError("stack_time: empty step list");
    Tape& t = *steps[0].tape();
    const int64_t b = steps[0].val().rows();
    const int64_t d = steps[0].val().cols();
    const int64_t tt = static_cast<int64_t>(steps.size());
    bool rg = false;
    std::vector<int> part_idx;
    part_idx.reserve(steps.size());
    for (const Var& s : steps) {
        if (s.tape() != &t) throw UsageError("stack_time: mixed tapes");
        if (s.val().rows() != b || s.val().cols() != d) throw ShapeError("stack_time: shape mismatch");
        rg = rg || t.node(s.index()).requires_grad;
        part_idx.push_back(s.index());
    }
    Tensor out({b, tt, d});
    for (int64_t ti = 0; ti < tt; ++ti) {
        const Tensor& sv = t.node(part_idx[static_cast<size_t>(ti)]).value;
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t j = 0; j < d; ++j) out[(bi * tt + ti) * d + j] = sv[bi * d + j];
    }
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [yi, b, tt, d, part_idx = std::move(part_idx)](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        for (int64_t ti = 0; ti < tt; ++ti) {
            const int pi = part_idx[static_cast<size_t>(ti)];
            if (!tp.node(pi).requires_grad) continue;
            Tensor& gp = tp.grad_ref(pi);
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t j = 0; j < d; ++j) gp[bi * d + j] += g[(bi * tt + ti) * d + j];
        }
    };
    return y;
}

Var detach(Var a) {
    require_defined(a);
    return a.tape()->input(a.val());
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Var sum_all(Var a) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    double s = 0.0;
    for (int64_t i = 0; i < av.size(); ++i) s += av[i];
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(Tensor::scalar(s), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi](Tape& tp) {
        const double g = tp.node(yi).grad[0];
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return y;
}

Var mean_all(Var a) {
    require_defined(a);
    return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size()));
}

Var row_sum(Var a) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const int64_t n = av.rows(), d = av.cols();
    Tensor out({n, 1});
    for (int64_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += av[r * d + j];
        out[r] = s;
    }
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, n, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d; ++j) ga[r * d + j] += g[r];
    };
    return y;
}

Var mean_rows(Var a) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const int64_t n = av.rows(), d = av.cols();
    Tensor out({1, d});
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < d; ++j) out[j] += av[r * d + j];
    for (int64_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, n, d](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        const double inv = 1.0 / static_cast<double>(n);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d; ++j) ga[r * d + j] += g[j] * inv;
    };
    return y;
}

Var segment_mean_rows(Var a, std::span<const std::pair<int64_t, int64_t>> ranges) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const int64_t n = av.rows(), d = av.cols();
    const int64_t g_count = static_cast<int64_t>(ranges.size());
    Tensor out({g_count, d});
    for (int64_t gi = 0; gi < g_count; ++gi) {
        const auto [r0, r1] = ranges[static_cast<size_t>(gi)];
        if (r0 < 0 || r1 > n || r0 >= r1) throw ShapeError("segment_mean_rows: bad range");
        for (int64_t r = r0; r < r1; ++r)
            for (int64_t j = 0; j < d; ++j) out[gi * d + j] += av[r * d + j];
        const double inv = 1.0 / static_cast<double>(r1 - r0);
        for (int64_t j = 0; j < d; ++j) out[gi * d + j] *= inv;
    }
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    std::vector<std::pair<int64_t, int64_t>> owned(ranges.begin(), ranges.end());
    t.node(yi).backward_fn = [ai, yi, d, owned = std::move(owned)](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t gi = 0; gi < static_cast<int64_t>(owned.size()); ++gi) {
            const auto [r0, r1] = owned[static_cast<size_t>(gi)];
            const double inv = 1.0 / static_cast<double>(r1 - r0);
            for (int64_t r = r0; r < r1; ++r)
                for (int64_t j = 0; j < d; ++j) ga[r * d + j] += g[gi * d + j] * inv;
        }
    };
    return y;
}

Var group_mean_rows(Var a, std::span<const std::vector<int64_t>> groups) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const int64_t n = av.rows(), d = av.cols();
    const int64_t g_count = static_cast<int64_t>(groups.size());
    Tensor out({g_count, d});
    for (int64_t gi = 0; gi < g_count; ++gi) {
        const auto& idx = groups[static_cast<size_t>(gi)];
        if (idx.empty()) throw ShapeError("group_mean_rows: empty group");
        for (int64_t r : idx) {
            if (r < 0 || r >= n) throw ShapeError("group_mean_rows: row index out of range");
            for (int64_t j = 0; j < d; ++j) out[gi * d + j] += av[r * d + j];
        }
        const double inv = 1.0 / static_cast<double>(idx.size());
        for (int64_t j = 0; j < d; ++j) out[gi * d + j] *= inv;
    }
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    std::vector<std::vector<int64_t>> owned(groups.begin(), groups.end());
    t.node(yi).backward_fn = [ai, yi, d, owned = std::move(owned)](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t gi = 0; gi < static_cast<int64_t>(owned.size()); ++gi) {
            const auto& idx = owned[static_cast<size_t>(gi)];
            const double inv = 1.0 / static_cast<double>(idx.size());
            for (int64_t r : idx)
                for (int64_t j = 0; j < d; ++j) ga[r * d + j] += g[gi * d + j] * inv;
        }
    };
    return y;
}

Var scale_rows(Var a, std::vector<double> factors) {
    require_defined(a);
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const int64_t n = av.rows(), d = av.cols();
    if (static_cast<int64_t>(factors.size()) != n) throw ShapeError("scale_rows: factor count");
    Tensor out(av.shape());
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < d; ++j) out[r * d + j] = av[r * d + j] * factors[static_cast<size_t>(r)];
    const int ai = a.index();
    const bool rg = t.node(ai).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [ai, yi, n, d, factors = std::move(factors)](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& ga = tp.grad_ref(ai);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d; ++j) ga[r * d + j] += g[r * d + j] * factors[static_cast<size_t>(r)];
    };
    return y;
}

// ---------------------------------------------------------------------------
// Layer norm
// ---------------------------------------------------------------------------

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Tape& t = *require_same_tape(x, gain);
    require_same_tape(x, bias);
    if (eps <= 0.0) throw UsageError("layer_norm: eps must be positive");
    const Tensor& xv = x.val();
    const Tensor& gv = gain.val();
    const Tensor& bv = bias.val();
    const int64_t n = xv.rows(), d = xv.cols();
    if (d < 1) throw ShapeError("layer_norm: empty rows");
    if (gv.size() != d || bv.size() != d) throw ShapeError("layer_norm: gain/bias width mismatch");

    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    Tensor inv_std({n});
    for (int64_t r = 0; r < n; ++r) {
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += xv[r * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = xv[r * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (int64_t j = 0; j < d; ++j) {
            const double xh = (xv[r * d + j] - mean) * inv;
            xhat[r * d + j] = xh;
            out[r * d + j] = gv[j] * xh + bv[j];
        }
    }
    const int xi = x.index(), gi = gain.index(), bi = bias.index();
    const bool rg =
        t.node(xi).requires_grad || t.node(gi).requires_grad || t.node(bi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [xi, gi, bi, yi, n, d, xhat = std::move(xhat),
                              inv_std = std::move(inv_std)](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        const Tensor& gv2 = tp.node(gi).value;
        if (tp.node(gi).requires_grad) {
            Tensor& gg = tp.grad_ref(gi);
            for (int64_t r = 0; r < n; ++r)
                for (int64_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        }
        if (tp.node(bi).requires_grad) {
            Tensor& gb = tp.grad_ref(bi);
            for (int64_t r = 0; r < n; ++r)
                for (int64_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (tp.node(xi).requires_grad) {
            Tensor& gx = tp.grad_ref(xi);
            for (int64_t r = 0; r < n; ++r) {
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double dxh = g[r * d + j] * gv2[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat[r * d + j];
                }
                mean_dxh /= static_cast<double>(d);
                mean_dxh_xh /= static_cast<double>(d);
                for (int64_t j = 0; j < d; ++j) {
                    const double dxh = g[r * d + j] * gv2[j];
                    gx[r * d + j] +=
                        inv_std[r] * (dxh - mean_dxh - xhat[r * d + j] * mean_dxh_xh);
                }
            }
        }
    };
    return y;
}

// ---------------------------------------------------------------------------
// Causal multi-head self-attention
// ---------------------------------------------------------------------------

Var causal_attention(Var x, Var wqkv, Var bqkv, Var wo, Var bo, int heads) {
    Tape& t = *require_same_tape(x, wqkv);
    require_same_tape(x, bqkv);
    require_same_tape(x, wo);
    require_same_tape(x, bo);
    const Tensor& xv = x.val();
    const int64_t rank = xv.ndim();
    if (rank != 2 && rank != 3) throw ShapeError("causal_attention: input must be [T,d] or [B,T,d]");
    const int64_t b_count = rank == 3 ? xv.dim(0) : 1;
    const int64_t tt = rank == 3 ? xv.dim(1) : xv.dim(0);
    const int64_t d = rank == 3 ? xv.dim(2) : xv.dim(1);
    if (tt < 1) throw ShapeError("causal_attention: empty sequence");
    if (heads < 1 || d % heads != 0) {
        throw ConfigError("causal_attention: hidden width not divisible by head count");
    }
    const int64_t dh = d / heads;
    const double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor& wqkv_v = wqkv.val();
    const Tensor& bqkv_v = bqkv.val();
    const Tensor& wo_v = wo.val();
    const Tensor& bo_v = bo.val();
    if (wqkv_v.rows() != d || wqkv_v.cols() != 3 * d) throw ShapeError("causal_attention: wqkv shape");
    if (bqkv_v.size() != 3 * d) throw ShapeError("causal_attention: bqkv shape");
    if (wo_v.rows() != d || wo_v.cols() != d) throw ShapeError("causal_attention: wo shape");
    if (bo_v.size() != d) throw ShapeError("causal_attention: bo shape");

    Tensor qkv({b_count, tt, 3 * d});
    Tensor probs({b_count, static_cast<int64_t>(heads), tt, tt});
    Tensor attn_out({b_count, tt, d});
    Tensor out(xv.shape());

    for (int64_t b = 0; b < b_count; ++b) {
        const double* xb = xv.data() + b * tt * d;
        double* qkv_b = qkv.data() + b * tt * 3 * d;
        // qkv = x wqkv + bqkv
        for (int64_t i = 0; i < tt; ++i) {
            double* row = qkv_b + i * 3 * d;
            for (int64_t j = 0; j < 3 * d; ++j) row[j] = bqkv_v[j];
            for (int64_t k = 0; k < d; ++k) {
                const double xk = xb[i * d + k];
                const double* wrow = wqkv_v.data() + k * 3 * d;
                for (int64_t j = 0; j < 3 * d; ++j) row[j] += xk * wrow[j];
            }
        }
        double* ao_b = attn_out.data() + b * tt * d;
        for (int64_t i = 0; i < tt * d; ++i) ao_b[i] = 0.0;
        for (int h = 0; h < heads; ++h) {
            const int64_t off_q = h * dh, off_k = d + h * dh, off_v = 2 * d + h * dh;
            double* p_h = probs.data() + ((b * heads + h) * tt) * tt;
            for (int64_t i = 0; i < tt; ++i) {
                const double* qi = qkv_b + i * 3 * d + off_q;
                double* p_row = p_h + i * tt;
                double max_s = -1e300;
                for (int64_t j = 0; j <= i; ++j) {
                    const double* kj = qkv_b + j * 3 * d + off_k;
                    double s = 0.0;
                    for (int64_t k = 0; k < dh; ++k) s += qi[k] * kj[k];
                    s *= scale_f;
                    p_row[j] = s;
                    if (s > max_s) max_s = s;
                }
                double denom = 0.0;
                for (int64_t j = 0; j <= i; ++j) {
                    p_row[j] = std::exp(p_row[j] - max_s);
                    denom += p_row[j];
                }
                const double inv = 1.0 / denom;
                double* oi = ao_b + i * d + off_q;
                for (int64_t j = 0; j <= i; ++j) {
                    p_row[j] *= inv;
                    const double* vj = qkv_b + j * 3 * d + off_v;
                    const double pw = p_row[j];
                    for (int64_t k = 0; k < dh; ++k) oi[k] += pw * vj[k];
                }
                for (int64_t j = i + 1; j < tt; ++j) p_row[j] = 0.0;
            }
        }
        // y = attn_out wo + bo
        double* yb = out.data() + b * tt * d;
        for (int64_t i = 0; i < tt; ++i) {
            double* row = yb + i * d;
            for (int64_t j = 0; j < d; ++j) row[j] = bo_v[j];
            for (int64_t k = 0; k < d; ++k) {
                const double a = ao_b[i * d + k];
                const double* wrow = wo_v.data() + k * d;
                for (int64_t j = 0; j < d; ++j) row[j] += a * wrow[j];
            }
        }
    }

    const int xi = x.index(), wqkv_i = wqkv.index(), bqkv_i = bqkv.index();
    const int wo_i = wo.index(), bo_i = bo.index();
    const bool rg = t.node(xi).requires_grad || t.node(wqkv_i).requires_grad ||
                    t.node(bqkv_i).requires_grad || t.node(wo_i).requires_grad ||
                    t.node(bo_i).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    t.node(yi).backward_fn = [=, qkv = std::move(qkv), probs = std::move(probs),
                              attn_out = std::move(attn_out)](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        const Tensor& xv2 = tp.node(xi).value;
        const Tensor& wqkv_v2 = tp.node(wqkv_i).value;
        const Tensor& wo_v2 = tp.node(wo_i).value;
        const bool need_x = tp.node(xi).requires_grad;
        const bool need_wqkv = tp.node(wqkv_i).requires_grad;
        const bool need_bqkv = tp.node(bqkv_i).requires_grad;
        const bool need_wo = tp.node(wo_i).requires_grad;
        const bool need_bo = tp.node(bo_i).requires_grad;

        Tensor d_attn({tt, d});
        Tensor d_qkv({tt, 3 * d});
        for (int64_t b = 0; b < b_count; ++b) {
            const double* gb = g.data() + b * tt * d;
            const double* ao_b = attn_out.data() + b * tt * d;
            const double* qkv_b = qkv.data() + b * tt * 3 * d;
            d_attn.zero();
            d_qkv.zero();
            // through output projection
            if (need_wo) {
                Tensor& gwo = tp.grad_ref(wo_i);
                for (int64_t i = 0; i < tt; ++i)
                    for (int64_t k = 0; k < d; ++k) {
                        const double a = ao_b[i * d + k];
                        for (int64_t j = 0; j < d; ++j) gwo[k * d + j] += a * gb[i * d + j];
                    }
            }
            if (need_bo) {
                Tensor& gbo = tp.grad_ref(bo_i);
                for (int64_t i = 0; i < tt; ++i)
                    for (int64_t j = 0; j < d; ++j) gbo[j] += gb[i * d + j];
            }
            for (int64_t i = 0; i < tt; ++i)
                for (int64_t k = 0; k < d; ++k) {
                    const double* wrow = wo_v2.data() + k * d;
                    double acc = 0.0;
                    for (int64_t j = 0; j < d; ++j) acc += gb[i * d + j] * wrow[j];
                    d_attn[i * d + k] = acc;
                }
            // through attention
            std::vector<double> dp(static_cast<size_t>(tt));
            for (int h = 0; h < heads; ++h) {
                const int64_t off_q = h * dh, off_k = d + h * dh, off_v = 2 * d + h * dh;
                const double* p_h = probs.data() + ((b * heads + h) * tt) * tt;
                for (int64_t i = 0; i < tt; ++i) {
                    const double* doi = d_attn.data() + i * d + off_q;
                    const double* p_row = p_h + i * tt;
                    double dot_pd = 0.0;
                    for (int64_t j = 0; j <= i; ++j) {
                        const double* vj = qkv_b + j * 3 * d + off_v;
                        double acc = 0.0;
                        for (int64_t k = 0; k < dh; ++k) acc += doi[k] * vj[k];
                        dp[static_cast<size_t>(j)] = acc;
                        dot_pd += p_row[j] * acc;
                        double* dvj = d_qkv.data() + j * 3 * d + off_v;
                        const double pw = p_row[j];
                        for (int64_t k = 0; k < dh; ++k) dvj[k] += pw * doi[k];
                    }
                    const double* qi = qkv_b + i * 3 * d + off_q;
                    double* dqi = d_qkv.data() + i * 3 * d + off_q;
                    for (int64_t j = 0; j <= i; ++j) {
                        const double ds = p_row[j] * (dp[static_cast<size_t>(j)] - dot_pd) * scale_f;
                        const double* kj = qkv_b + j * 3 * d + off_k;
                        double* dkj = d_qkv.data() + j * 3 * d + off_k;
                        for (int64_t k = 0; k < dh; ++k) {
                            dqi[k] += ds * kj[k];
                            dkj[k] += ds * qi[k];
                        }
                    }
                }
            }
            // through qkv projection
            if (need_bqkv) {
                Tensor& gbqkv = tp.grad_ref(bqkv_i);
                for (int64_t i = 0; i < tt; ++i)
                    for (int64_t j = 0; j < 3 * d; ++j) gbqkv[j] += d_qkv[i * 3 * d + j];
            }
            const double* xb = xv2.data() + b * tt * d;
            if (need_wqkv) {
                Tensor& gw = tp.grad_ref(wqkv_i);
                for (int64_t i = 0; i < tt; ++i)
                    for (int64_t k = 0; k < d; ++k) {
                        const double xk = xb[i * d + k];
                        double* grow = gw.data() + k * 3 * d;
                        const double* drow = d_qkv.data() + i * 3 * d;
                        for (int64_t j = 0; j < 3 * d; ++j) grow[j] += xk * drow[j];
                    }
            }
            if (need_x) {
                Tensor& gx = tp.grad_ref(xi);
                double* gxb = gx.data() + b * tt * d;
                for (int64_t i = 0; i < tt; ++i)
                    for (int64_t k = 0; k < d; ++k) {
                        const double* wrow = wqkv_v2.data() + k * 3 * d;
                        const double* drow = d_qkv.data() + i * 3 * d;
                        double acc = 0.0;
                        for (int64_t j = 0; j < 3 * d; ++j) acc += drow[j] * wrow[j];
                        gxb[i * d + k] += acc;
                    }
            }
        }
    };
    return y;
}

// ---------------------------------------------------------------------------
// Graph message passing
// ---------------------------------------------------------------------------

namespace {

void validate_edges(std::span<const Edge> edges, int64_t n_src, int64_t n_dst) {
    for (const Edge& e : edges) {
        if (e.src < 0 || e.src >= n_src || e.dst < 0 || e.dst >= n_dst) {
            throw GraphError("edge endpoint out of range");
        }
    }
}

}  // namespace

Var neighbor_mean(Var x, std::span<const Edge> edges, int64_t n_dst) {
    require_defined(x);
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    const int64_t n_src = xv.rows(), d = xv.cols();
    validate_edges(edges, n_src, n_dst);
    Tensor out({n_dst, d});
    std::vector<int32_t> count(static_cast<size_t>(n_dst), 0);
    for (const Edge& e : edges) {
        for (int64_t j = 0; j < d; ++j) out[e.dst * d + j] += xv[e.src * d + j];
        ++count[static_cast<size_t>(e.dst)];
    }
    for (int64_t i = 0; i < n_dst; ++i) {
        if (count[static_cast<size_t>(i)] > 0) {
            const double inv = 1.0 / count[static_cast<size_t>(i)];
            for (int64_t j = 0; j < d; ++j) out[i * d + j] *= inv;
        }
    }
    const int xi = x.index();
    const bool rg = t.node(xi).requires_grad;
    Var y = t.emit(std::move(out), rg, nullptr);
    if (!rg) return y;
    const int yi = y.index();
    std::vector<Edge> owned(edges.begin(), edges.end());
    t.node(yi).backward_fn = [xi, yi, d, owned = std::move(owned),
                              count = std::move(count)](Tape& tp) {
        const Tensor& g = tp.node(yi).grad;
        Tensor& gx = tp.grad_ref(xi);
        for (const Edge& e : owned) {
            const double inv = 1.0 / count[static_cast<size_t>(e.dst)];
            for (int64_t j = 0; j < d; ++j) gx[e.src * d + j] += g[e.dst * d + j] * inv;
        }
    };
    return y;
}

namespace {

Var message_pass_impl(Var x, std::span<const Edge> edges, Var w_self, Var w_neigh, Var* bias) {
    Tape& t = *require_same_tape(x, w_self);
    require_same_tape(x, w_neigh);
    const Tensor& xv = x.val();
    const int64_t n = xv.rows();
    validate_edges(edges, n, n);
    Var agg = neighbor_mean(x, edges, n);
    Var pre = add(matmul(x, w_self), matmul(agg, w_neigh));
    if (bias != nullptr) pre = add_rowvec(pre, *bias);
    (void)t;
    return tanh(pre);
}

}  // namespace

Var message_pass(Var x, std::span<const Edge> edges, Var w_self, Var w_neigh) {
    return message_pass_impl(x, edges, w_self, w_neigh, nullptr);
}

Var message_pass(Var x, std::span<const Edge> edges, Var w_self, Var w_neigh, Var bias) {
    return message_pass_impl(x, edges, w_self, w_neigh, &bias);
}

}  // namespace softworld::ag
