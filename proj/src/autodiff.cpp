#include "motion/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "motion/errors.hpp"

namespace motion {

std::string_view group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::encoder: return "encoder";
        case ParamGroup::latent: return "latent";
        case ParamGroup::decoder: return "decoder";
        case ParamGroup::discriminators: return "discriminators";
    }
    return "unknown";
}

ParamGroup parse_group(std::string_view name) {
    for (std::size_t i = 0; i < kParamGroupCount; ++i) {
        const auto g = static_cast<ParamGroup>(i);
        if (group_name(g) == name) return g;
    }
    throw ConfigError("unknown parameter group '" + std::string(name) + "'");
}

const Tensor& Var::value() const { return graph_->value(id_); }

bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::push(Node node) {
    if (!node.value.all_finite()) {
        throw NumericError("non-finite value produced by op '" + std::string(node.op) + "' with shape " +
                           shape_str(node.value.shape()));
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    n.leaf = true;
    return push(std::move(n));
}

Var Graph::variable(Tensor value, bool requires_grad) {
    Node n;
    n.op = "variable";
    n.value = std::move(value);
    n.leaf = true;
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Var Graph::param(const Parameter& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
    Node n;
    n.op = "param";
    n.value = p.value;
    n.leaf = true;
    n.requires_grad = p.requires_grad && group_grad_[static_cast<std::size_t>(p.group)];
    n.param = &p;
    Var v = push(std::move(n));
    bound_.emplace(&p, v.id());
    return v;
}

Var Graph::apply(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) {
        if (i >= nodes_.size()) throw std::out_of_range("graph input id out of range");
        return nodes_[i].requires_grad;
    });
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

const Tensor& Graph::grad(std::size_t id) const {
    static const Tensor kEmpty;
    const Node& n = nodes_.at(id);
    return n.grad.empty() ? kEmpty : n.grad;
}

Tensor Graph::param_grad(const Parameter& p) const {
    auto it = bound_.find(&p);
    if (it == bound_.end() || nodes_[it->second].grad.empty()) return Tensor(p.value.shape());
    return nodes_[it->second].grad;
}

Tensor& Graph::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Graph::add_grad(std::size_t id, const Tensor& delta) {
    if (!nodes_[id].requires_grad) return;
    grad_slot(id) += delta;
}

void Graph::backward(Var loss) {
    if (loss.graph_ != this) throw std::invalid_argument("loss belongs to a different graph");
    const std::size_t root = loss.id();
    if (nodes_[root].value.size() != 1) {
        throw DimensionError("backward requires a scalar loss, got shape " + shape_str(nodes_[root].value.shape()));
    }
    for (std::size_t i = 0; i <= root; ++i) {
        if (!nodes_[i].leaf) nodes_[i].grad = Tensor();
    }
    if (!nodes_[root].requires_grad) return;
    grad_slot(root).fill(1.0);

    for (std::size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.leaf || n.grad.empty() || !n.requires_grad) continue;
        if (n.backward) n.backward(*this, i);
    }
}

namespace ops {
namespace {

Graph& same_graph(Var a, Var b) {
    if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
        throw std::invalid_argument("operands belong to different graphs");
    }
    return a.graph();
}

// Validates rhs broadcasting against lhs; returns the rhs period.
std::size_t broadcast_period(const Shape& a, const Shape& b, std::string_view op) {
    Shape bs = b;
    while (bs.size() > 1 && bs.front() == 1) bs.erase(bs.begin());
    const bool scalar = shape_numel(bs) == 1;
    bool trailing = bs.size() <= a.size() && std::equal(bs.rbegin(), bs.rend(), a.rbegin());
    if (!scalar && !trailing) {
        throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
    }
    return shape_numel(bs);
}

void check_rank2(const Tensor& t, std::string_view op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

template <typename F, typename D>
Var unary(Var x, std::string_view op, F f, D dfdx) {
    Graph& g = x.graph();
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const std::size_t xi = x.id();
    return g.apply(op, std::move(out), {xi}, [xi, dfdx](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        const Tensor& xv2 = gr.value(xi);
        const Tensor& yv = gr.value(self);
        Tensor& gx = gr.grad_slot(xi);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * dfdx(xv2[i], yv[i]);
    });
}

struct AxisLayout {
    std::size_t outer = 1, axis = 1, inner = 1;
};

AxisLayout layout(const Shape& s, std::size_t axis) {
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " invalid for " + shape_str(s));
    AxisLayout l;
    for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
    l.axis = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
    return l;
}

}  // namespace

Var matmul(Var a, Var b) {
    Graph& g = same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_rank2(av, "matmul");
    check_rank2(bv, "matmul");
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_str(av.shape()) + " x " +
                             shape_str(bv.shape()));
    }
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = &out[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &bv[p * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    const std::size_t ai = a.id(), bi = b.id();
    return g.apply("matmul", std::move(out), {ai, bi}, [ai, bi, m, k, n](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        const Tensor& av2 = gr.value(ai);
        const Tensor& bv2 = gr.value(bi);
        if (gr.requires_grad(ai)) {
            Tensor& ga = gr.grad_slot(ai);  // G * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bv2[p * n + j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad_slot(bi);  // A^T * G
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av2[i * k + p];
                    if (aip == 0.0) continue;
                    double* gbrow = &gb[p * n];
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * go[i * n + j];
                }
            }
        }
    });
}

Var add(Var a, Var b) {
    Graph& g = same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t period = broadcast_period(av.shape(), bv.shape(), "add");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % period];
    const std::size_t ai = a.id(), bi = b.id();
    return g.apply("add", std::move(out), {ai, bi}, [ai, bi, period](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        gr.add_grad(ai, go);
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad_slot(bi);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i % period] += go[i];
        }
    });
}

Var sub(Var a, Var b) {
    Graph& g = same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t period = broadcast_period(av.shape(), bv.shape(), "sub");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i % period];
    const std::size_t ai = a.id(), bi = b.id();
    return g.apply("sub", std::move(out), {ai, bi}, [ai, bi, period](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        gr.add_grad(ai, go);
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad_slot(bi);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i % period] -= go[i];
        }
    });
}

Var mul(Var a, Var b) {
    Graph& g = same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t period = broadcast_period(av.shape(), bv.shape(), "mul");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i % period];
    const std::size_t ai = a.id(), bi = b.id();
    return g.apply("mul", std::move(out), {ai, bi}, [ai, bi, period](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        const Tensor& av2 = gr.value(ai);
        const Tensor& bv2 = gr.value(bi);
        if (gr.requires_grad(ai)) {
            Tensor& ga = gr.grad_slot(ai);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i % period];
        }
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad_slot(bi);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i % period] += go[i] * av2[i];
        }
    });
}

Var scale(Var x, double s) {
    return unary(x, "scale", [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(Var x, double s) {
    return unary(x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
    return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
    return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var log(Var x) {
    return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
    return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(Var x, double lo, double hi) {
    return unary(x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
                 [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var concat(std::span<const Var> xs, std::size_t axis) {
    if (xs.empty()) throw DimensionError("concat of zero tensors");
    Graph& g = xs.front().graph();
    const Shape& first = xs.front().shape();
    if (axis >= first.size()) throw DimensionError("concat axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> widths;
    for (const Var& v : xs) {
        same_graph(xs.front(), v);
        const Shape& s = v.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
        if (!ok) throw DimensionError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
        out_shape[axis] += s[axis];
        ids.push_back(v.id());
        widths.push_back(s[axis]);
    }
    const AxisLayout l = layout(out_shape, axis);
    Tensor out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Tensor& src = xs[k].value();
        const std::size_t block = widths[k] * l.inner;
        for (std::size_t o = 0; o < l.outer; ++o) {
            std::copy_n(&src[o * block], block, &out[o * l.axis * l.inner + offset * l.inner]);
        }
        offset += widths[k];
    }
    return g.apply("concat", std::move(out), ids, [ids, widths, l](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t block = widths[k] * l.inner;
            if (gr.requires_grad(ids[k])) {
                Tensor& gx = gr.grad_slot(ids[k]);
                for (std::size_t o = 0; o < l.outer; ++o) {
                    const double* src = &go[o * l.axis * l.inner + off * l.inner];
                    double* dst = &gx[o * block];
                    for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                }
            }
            off += widths[k];
        }
    });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
    Graph& g = x.graph();
    const Shape& s = x.shape();
    const AxisLayout l = layout(s, axis);
    if (begin >= end || end > l.axis) {
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for axis " +
                             std::to_string(axis) + " of " + shape_str(s));
    }
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    const std::size_t block = (end - begin) * l.inner;
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < l.outer; ++o) {
        std::copy_n(&xv[o * l.axis * l.inner + begin * l.inner], block, &out[o * block]);
    }
    const std::size_t xi = x.id();
    return g.apply("slice", std::move(out), {xi}, [xi, l, begin, block](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        Tensor& gx = gr.grad_slot(xi);
        for (std::size_t o = 0; o < l.outer; ++o) {
            double* dst = &gx[o * l.axis * l.inner + begin * l.inner];
            const double* src = &go[o * block];
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
    });
}

Var sum(Var x, std::size_t axis) {
    Graph& g = x.graph();
    const AxisLayout l = layout(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = 1;
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t a = 0; a < l.axis; ++a) {
            for (std::size_t i = 0; i < l.inner; ++i) out[o * l.inner + i] += xv[(o * l.axis + a) * l.inner + i];
        }
    }
    const std::size_t xi = x.id();
    return g.apply("sum", std::move(out), {xi}, [xi, l](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        Tensor& gx = gr.grad_slot(xi);
        for (std::size_t o = 0; o < l.outer; ++o) {
            for (std::size_t a = 0; a < l.axis; ++a) {
                for (std::size_t i = 0; i < l.inner; ++i) gx[(o * l.axis + a) * l.inner + i] += go[o * l.inner + i];
            }
        }
    });
}

Var mean(Var x) {
    Graph& g = x.graph();
    const Tensor& xv = x.value();
    double acc = 0.0;
    for (double v : xv.data()) acc += v;
    const double inv = 1.0 / static_cast<double>(xv.size());
    const std::size_t xi = x.id();
    return g.apply("mean", Tensor::scalar(acc * inv), {xi}, [xi, inv](Graph& gr, std::size_t self) {
        const double go = gr.grad(self)[0];
        Tensor& gx = gr.grad_slot(xi);
        for (double& v : gx.data()) v += go * inv;
    });
}

Var softmax(Var x, std::size_t axis) {
    Graph& g = x.graph();
    const AxisLayout l = layout(x.shape(), axis);
    const Tensor& xv = x.value();
    Tensor out(x.shape());
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t i = 0; i < l.inner; ++i) {
            const std::size_t base = o * l.axis * l.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < l.axis; ++a) mx = std::max(mx, xv[base + a * l.inner]);
            double z = 0.0;
            for (std::size_t a = 0; a < l.axis; ++a) {
                const double e = std::exp(xv[base + a * l.inner] - mx);
                out[base + a * l.inner] = e;
                z += e;
            }
            for (std::size_t a = 0; a < l.axis; ++a) out[base + a * l.inner] /= z;
        }
    }
    const std::size_t xi = x.id();
    return g.apply("softmax", std::move(out), {xi}, [xi, l](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        const Tensor& y = gr.value(self);
        Tensor& gx = gr.grad_slot(xi);
        for (std::size_t o = 0; o < l.outer; ++o) {
            for (std::size_t i = 0; i < l.inner; ++i) {
                const std::size_t base = o * l.axis * l.inner + i;
                double dot = 0.0;
                for (std::size_t a = 0; a < l.axis; ++a) dot += go[base + a * l.inner] * y[base + a * l.inner];
                for (std::size_t a = 0; a < l.axis; ++a) {
                    const std::size_t k = base + a * l.inner;
                    gx[k] += y[k] * (go[k] - dot);
                }
            }
        }
    });
}

Var scale_rows(Var x, Var s) {
    Graph& g = same_graph(x, s);
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    check_rank2(xv, "scale_rows");
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (sv.size() != rows) {
        throw DimensionError("scale_rows: " + shape_str(sv.shape()) + " does not match rows of " +
                             shape_str(xv.shape()));
    }
    Tensor out = xv;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= sv[r];
    }
    const std::size_t xi = x.id(), si = s.id();
    return g.apply("scale_rows", std::move(out), {xi, si}, [xi, si, rows, cols](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad(self);
        const Tensor& xv2 = gr.value(xi);
        const Tensor& sv2 = gr.value(si);
        if (gr.requires_grad(xi)) {
            Tensor& gx = gr.grad_slot(xi);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += go[r * cols + c] * sv2[r];
            }
        }
        if (gr.requires_grad(si)) {
            Tensor& gs = gr.grad_slot(si);
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) acc += go[r * cols + c] * xv2[r * cols + c];
                gs[r] += acc;
            }
        }
    });
}

Var detach(Var x) { return x.graph().constant(x.value()); }

}  // namespace ops

Var operator+(Var a, Var b) { return ops::add(a, b); }
Var operator-(Var a, Var b) { return ops::sub(a, b); }
Var operator*(Var a, Var b) { return ops::mul(a, b); }

}  // namespace motion
