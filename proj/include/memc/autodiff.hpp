// Reverse-mode automatic differentiation over the tensor-core op set. The
// tape is dynamic: every forward pass builds a fresh DAG of shared nodes, and
// backward() visits it in reverse topological order exactly once, summing the
// gradients of nodes consumed by several downstream ops.

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "memc/rng.hpp"
#include "memc/tensor.hpp"

namespace memc::ad {

class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad; // allocated and zeroed by the backward driver
    bool requires_grad = false;
    std::string param_name; // nonempty for named parameter leaves
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backprop; // reads this->grad, accumulates into inputs
};

// Lightweight handle to a tape node.
class Value {
public:
    Value() = default;
    explicit Value(NodePtr node) : node_(std::move(node)) {}

    const Tensor& tensor() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool valid() const { return node_ != nullptr; }
    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

Value constant(Tensor t);
Value leaf(Tensor t, bool requires_grad);

// Accumulate g into the node's gradient if it participates in backward.
void accumulate_grad(Node& node, const Tensor& g);

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value relu(const Value& a);
Value sigmoid(const Value& a);
Value softmax_channels(const Value& a);
Value conv2d(const Value& input, const Value& weight, const Value& bias, int stride, int pad);
Value concat_channels(const std::vector<Value>& parts);
Value slice_channels(const Value& a, int c_begin, int c_end);
Value upsample_nearest2(const Value& a);
Value avgpool2(const Value& a);
Value sum_all(const Value& a);

// Charbonnier penalty summed over all elements: sum sqrt(x^2 + eps^2).
Value charbonnier_sum(const Value& a, double eps);

// Runs reverse-mode accumulation from a scalar loss, leaving gradients on
// every reachable node that requires them. Safe to call repeatedly: grads of
// the reachable subgraph are reset first.
void backward(const Value& loss);

using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Named trainable tensors with per-parameter Adam state.
class ParamStore {
public:
    void add(const std::string& name, Tensor value);
    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    std::vector<std::string> names() const;
    std::size_t parameter_count() const; // total scalar count
    long step_count() const { return step_; }

    // Binds a parameter onto the current tape as a named leaf.
    Value leaf(const std::string& name) const;

    // Standard Adam with bias correction; weight decay is decoupled and
    // applied as p <- p - lr*wd*p before the moment update. Parameters with
    // no entry in grads take a zero gradient.
    void adam_step(const GradMap& grads, const AdamConfig& cfg);

private:
    struct Entry {
        Tensor value;
        Tensor m; // first moment
        Tensor v; // second moment
    };
    std::map<std::string, Entry> params_;
    long step_ = 0;
};

// Backward from the loss plus collection of dLoss/dParam for every parameter
// in the store; parameters not reached by the tape get zero gradients.
GradMap backward(const Value& loss, const ParamStore& store);

// Convolution weight init: uniform in (-s, s) with s = sqrt(2 / fan_in).
Tensor he_uniform(int n, int c, int h, int w, Rng& rng);

} // namespace memc::ad
