#pragma once

// Tape-based reverse-mode automatic differentiation.
//
// A Graph records every operation in creation order, which is a valid
// topological order; backward() walks the tape in reverse. Graphs are meant to
// be rebuilt for every training step. Parameters live outside the graph and are
// bound as leaves with Graph::param(); leaf gradients accumulate across
// backward() calls on the same graph and are read back with param_grad().

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "motion/tensor.hpp"

namespace motion {

enum class ParamGroup { encoder = 0, latent = 1, decoder = 2, discriminators = 3 };
inline constexpr std::size_t kParamGroupCount = 4;

std::string_view group_name(ParamGroup g);
ParamGroup parse_group(std::string_view name);

struct Parameter {
    std::string name;
    ParamGroup group = ParamGroup::encoder;
    Tensor value;
    bool requires_grad = true;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    // Receives the graph and the id of the node whose output gradient is ready;
    // must accumulate into the node's inputs via add_grad().
    using BackwardFn = std::function<void(Graph&, std::size_t)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value, bool requires_grad = true);
    // Binds a parameter once per graph; requires grad iff the parameter and its
    // group are both enabled.
    Var param(const Parameter& p);

    // Groups disabled here bind their parameters as constants. Affects
    // parameters bound after the call.
    void set_group_grad(ParamGroup g, bool enabled) { group_grad_[static_cast<std::size_t>(g)] = enabled; }

    // Appends an op node. `backward` is dropped when no input requires grad.
    Var apply(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    // Reverse sweep from a scalar loss. Interior gradients are reset on every
    // call; leaf gradients accumulate across calls (see param_grad()).
    void backward(Var loss);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& value(Var v) const { return nodes_[v.id()].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::string_view op(std::size_t id) const { return nodes_[id].op; }
    std::span<const std::size_t> inputs(std::size_t id) const { return nodes_[id].inputs; }

    // Gradient of a node after backward; empty if the node was not reached.
    const Tensor& grad(std::size_t id) const;
    const Tensor& grad(Var v) const { return grad(v.id()); }
    // Accumulated gradient of a bound parameter (zeros if unbound or frozen).
    Tensor param_grad(const Parameter& p) const;

    // For use inside backward rules.
    void add_grad(std::size_t id, const Tensor& delta);
    Tensor& grad_slot(std::size_t id);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        std::string_view op;
        std::vector<std::size_t> inputs;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool leaf = false;
        const Parameter* param = nullptr;
        BackwardFn backward;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> bound_;
    std::array<bool, kParamGroupCount> group_grad_{true, true, true, true};
};

namespace ops {

Var matmul(Var a, Var b);

// Binary elementwise ops. `b` may equal a's shape, be a single value, or match
// a's trailing dimensions; any other combination is rejected.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var log(Var x);
Var square(Var x);
Var clamp(Var x, double lo, double hi);

Var concat(std::span<const Var> xs, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);

// Reduces one axis, keeping it with size 1.
Var sum(Var x, std::size_t axis);
// Mean of all elements; returns shape [1].
Var mean(Var x);
Var softmax(Var x, std::size_t axis);

// x [B x n] scaled row-wise by s [B x 1].
Var scale_rows(Var x, Var s);

// Value copied into a constant leaf; blocks gradient flow.
Var detach(Var x);

}  // namespace ops

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

}  // namespace motion
