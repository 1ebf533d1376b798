#include "memc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "memc/error.hpp"

namespace memc::ad {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> inputs,
                  std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
    for (const NodePtr& in : node->inputs) {
        if (in->requires_grad) {
            node->requires_grad = true;
        }
    }
    return node;
}

bool is_scalar(const Tensor& t) {
    return t.n() == 1 && t.c() == 1 && t.h() == 1 && t.w() == 1;
}

// Reverse topological order of the requires_grad subgraph rooted at `root`:
// the root comes first, every node before the inputs it feeds from.
std::vector<Node*> toposort(Node* root) {
    std::vector<Node*> order;
    if (!root->requires_grad) {
        return order;
    }
    enum class Phase { enter, exit };
    std::vector<std::pair<Node*, Phase>> stack{{root, Phase::enter}};
    std::unordered_set<Node*> visited;
    while (!stack.empty()) {
        auto [node, phase] = stack.back();
        stack.pop_back();
        if (phase == Phase::exit) {
            order.push_back(node);
            continue;
        }
        if (visited.count(node)) {
            continue;
        }
        visited.insert(node);
        stack.emplace_back(node, Phase::exit);
        for (const NodePtr& in : node->inputs) {
            if (in->requires_grad && !visited.count(in.get())) {
                stack.emplace_back(in.get(), Phase::enter);
            }
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

} // namespace

void accumulate_grad(Node& node, const Tensor& g) {
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.empty()) {
        node.grad = Tensor(node.value.n(), node.value.c(), node.value.h(), node.value.w());
    }
    add_inplace(node.grad, g);
}

Value constant(Tensor t) {
    return leaf(std::move(t), false);
}

Value leaf(Tensor t, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(t);
    node->requires_grad = requires_grad;
    return Value(node);
}

Value add(const Value& a, const Value& b) {
    Tensor out = memc::add(a.tensor(), b.tensor());
    return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
        accumulate_grad(*self.inputs[0], self.grad);
        accumulate_grad(*self.inputs[1], self.grad);
    }));
}

Value sub(const Value& a, const Value& b) {
    Tensor out = memc::sub(a.tensor(), b.tensor());
    return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
        accumulate_grad(*self.inputs[0], self.grad);
        accumulate_grad(*self.inputs[1], memc::scale(self.grad, -1.0));
    }));
}

Value mul(const Value& a, const Value& b) {
    Tensor out = memc::mul(a.tensor(), b.tensor());
    return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
        accumulate_grad(*self.inputs[0], memc::mul(self.grad, self.inputs[1]->value));
        accumulate_grad(*self.inputs[1], memc::mul(self.grad, self.inputs[0]->value));
    }));
}

Value scale(const Value& a, double s) {
    Tensor out = memc::scale(a.tensor(), s);
    return Value(make_node(std::move(out), {a.node()}, [s](Node& self) {
        accumulate_grad(*self.inputs[0], memc::scale(self.grad, s));
    }));
}

Value relu(const Value& a) {
    Tensor out = memc::relu(a.tensor());
    return Value(make_node(std::move(out), {a.node()}, [](Node& self) {
        const Tensor& x = self.inputs[0]->value;
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] <= 0.0) {
                g[i] = 0.0;
            }
        }
        accumulate_grad(*self.inputs[0], g);
    }));
}

Value sigmoid(const Value& a) {
    Tensor out = a.tensor();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    }
    Tensor saved = out;
    return Value(make_node(std::move(out), {a.node()}, [saved](Node& self) {
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] *= saved[i] * (1.0 - saved[i]);
        }
        accumulate_grad(*self.inputs[0], g);
    }));
}

Value softmax_channels(const Value& a) {
    const Tensor& x = a.tensor();
    Tensor out(x.n(), x.c(), x.h(), x.w());
    for (int n = 0; n < x.n(); ++n) {
        for (int y = 0; y < x.h(); ++y) {
            for (int xx = 0; xx < x.w(); ++xx) {
                double mx = x.at(n, 0, y, xx);
                for (int c = 1; c < x.c(); ++c) {
                    mx = std::max(mx, x.at(n, c, y, xx));
                }
                double denom = 0.0;
                for (int c = 0; c < x.c(); ++c) {
                    denom += std::exp(x.at(n, c, y, xx) - mx);
                }
                for (int c = 0; c < x.c(); ++c) {
                    out.at(n, c, y, xx) = std::exp(x.at(n, c, y, xx) - mx) / denom;
                }
            }
        }
    }
    Tensor saved = out;
    return Value(make_node(std::move(out), {a.node()}, [saved](Node& self) {
        const Tensor& g = self.grad;
        Tensor gin(g.n(), g.c(), g.h(), g.w());
        for (int n = 0; n < g.n(); ++n) {
            for (int y = 0; y < g.h(); ++y) {
                for (int x = 0; x < g.w(); ++x) {
                    double dot = 0.0;
                    for (int c = 0; c < g.c(); ++c) {
                        dot += g.at(n, c, y, x) * saved.at(n, c, y, x);
                    }
                    for (int c = 0; c < g.c(); ++c) {
                        gin.at(n, c, y, x) =
                            saved.at(n, c, y, x) * (g.at(n, c, y, x) - dot);
                    }
                }
            }
        }
        accumulate_grad(*self.inputs[0], gin);
    }));
}

Value conv2d(const Value& input, const Value& weight, const Value& bias, int stride, int pad) {
    const Tensor& b = bias.tensor();
    if (b.n() != 1 || b.h() != 1 || b.w() != 1 || b.c() != weight.tensor().n()) {
        throw ShapeError("conv2d: bias " + b.shape_str() + " must be 1x" +
                         std::to_string(weight.tensor().n()) + "x1x1");
    }
    std::vector<double> bias_vec(b.data(), b.data() + b.size());
    Tensor out = memc::conv2d(input.tensor(), weight.tensor(), bias_vec, stride, pad);
    return Value(make_node(
        std::move(out), {input.node(), weight.node(), bias.node()},
        [stride, pad](Node& self) {
            const Tensor& x = self.inputs[0]->value;
            const Tensor& w = self.inputs[1]->value;
            const Tensor& g = self.grad;
            Tensor gx(x.n(), x.c(), x.h(), x.w());
            Tensor gw(w.n(), w.c(), w.h(), w.w());
            Tensor gb(1, w.n(), 1, 1);
            for (int n = 0; n < g.n(); ++n) {
                for (int co = 0; co < g.c(); ++co) {
                    for (int oy = 0; oy < g.h(); ++oy) {
                        for (int ox = 0; ox < g.w(); ++ox) {
                            const double go = g.at(n, co, oy, ox);
                            if (go == 0.0) {
                                continue;
                            }
                            gb.at(0, co, 0, 0) += go;
                            const int y0 = oy * stride - pad;
                            const int x0 = ox * stride - pad;
                            for (int ci = 0; ci < x.c(); ++ci) {
                                for (int ky = 0; ky < w.h(); ++ky) {
                                    const int iy = y0 + ky;
                                    if (iy < 0 || iy >= x.h()) {
                                        continue;
                                    }
                                    for (int kx = 0; kx < w.w(); ++kx) {
                                        const int ix = x0 + kx;
                                        if (ix < 0 || ix >= x.w()) {
                                            continue;
                                        }
                                        gx.at(n, ci, iy, ix) += go * w.at(co, ci, ky, kx);
                                        gw.at(co, ci, ky, kx) += go * x.at(n, ci, iy, ix);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            accumulate_grad(*self.inputs[0], gx);
            accumulate_grad(*self.inputs[1], gw);
            accumulate_grad(*self.inputs[2], gb);
        }));
}

Value concat_channels(const std::vector<Value>& parts) {
    std::vector<const Tensor*> tensors;
    std::vector<NodePtr> nodes;
    tensors.reserve(parts.size());
    for (const Value& p : parts) {
        tensors.push_back(&p.tensor());
        nodes.push_back(p.node());
    }
    Tensor out = memc::concat_channels(tensors);
    return Value(make_node(std::move(out), std::move(nodes), [](Node& self) {
        int c0 = 0;
        for (const NodePtr& in : self.inputs) {
            const int c1 = c0 + in->value.c();
            accumulate_grad(*in, memc::slice_channels(self.grad, c0, c1));
            c0 = c1;
        }
    }));
}

Value slice_channels(const Value& a, int c_begin, int c_end) {
    Tensor out = memc::slice_channels(a.tensor(), c_begin, c_end);
    return Value(make_node(std::move(out), {a.node()}, [c_begin](Node& self) {
        const Tensor& full = self.inputs[0]->value;
        Tensor g(full.n(), full.c(), full.h(), full.w());
        const Tensor& gs = self.grad;
        for (int n = 0; n < gs.n(); ++n) {
            for (int c = 0; c < gs.c(); ++c) {
                for (int y = 0; y < gs.h(); ++y) {
                    for (int x = 0; x < gs.w(); ++x) {
                        g.at(n, c_begin + c, y, x) = gs.at(n, c, y, x);
                    }
                }
            }
        }
        accumulate_grad(*self.inputs[0], g);
    }));
}

Value upsample_nearest2(const Value& a) {
    Tensor out = memc::upsample_nearest2(a.tensor());
    return Value(make_node(std::move(out), {a.node()}, [](Node& self) {
        const Tensor& x = self.inputs[0]->value;
        Tensor g(x.n(), x.c(), x.h(), x.w());
        const Tensor& go = self.grad;
        for (int n = 0; n < go.n(); ++n) {
            for (int c = 0; c < go.c(); ++c) {
                for (int y = 0; y < go.h(); ++y) {
                    for (int xx = 0; xx < go.w(); ++xx) {
                        g.at(n, c, y / 2, xx / 2) += go.at(n, c, y, xx);
                    }
                }
            }
        }
        accumulate_grad(*self.inputs[0], g);
    }));
}

Value avgpool2(const Value& a) {
    Tensor out = memc::avgpool2(a.tensor());
    return Value(make_node(std::move(out), {a.node()}, [](Node& self) {
        const Tensor& x = self.inputs[0]->value;
        Tensor g(x.n(), x.c(), x.h(), x.w());
        const Tensor& go = self.grad;
        for (int n = 0; n < go.n(); ++n) {
            for (int c = 0; c < go.c(); ++c) {
                for (int y = 0; y < go.h(); ++y) {
                    for (int xx = 0; xx < go.w(); ++xx) {
                        const double q = 0.25 * go.at(n, c, y, xx);
                        g.at(n, c, 2 * y, 2 * xx) += q;
                        g.at(n, c, 2 * y, 2 * xx + 1) += q;
                        g.at(n, c, 2 * y + 1, 2 * xx) += q;
                        g.at(n, c, 2 * y + 1, 2 * xx + 1) += q;
                    }
                }
            }
        }
        accumulate_grad(*self.inputs[0], g);
    }));
}

Value sum_all(const Value& a) {
    Tensor out(1, 1, 1, 1);
    out[0] = memc::sum(a.tensor());
    return Value(make_node(std::move(out), {a.node()}, [](Node& self) {
        const Tensor& x = self.inputs[0]->value;
        accumulate_grad(*self.inputs[0],
                        Tensor::full(x.n(), x.c(), x.h(), x.w(), self.grad[0]));
    }));
}

Value charbonnier_sum(const Value& a, double eps) {
    if (eps <= 0.0) {
        throw Error("charbonnier_sum: eps must be positive");
    }
    const Tensor& x = a.tensor();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += std::sqrt(x[i] * x[i] + eps * eps);
    }
    Tensor out(1, 1, 1, 1);
    out[0] = acc;
    return Value(make_node(std::move(out), {a.node()}, [eps](Node& self) {
        const Tensor& x = self.inputs[0]->value;
        const double g = self.grad[0];
        Tensor gi(x.n(), x.c(), x.h(), x.w());
        for (std::size_t i = 0; i < x.size(); ++i) {
            gi[i] = g * x[i] / std::sqrt(x[i] * x[i] + eps * eps);
        }
        accumulate_grad(*self.inputs[0], gi);
    }));
}

void backward(const Value& loss) {
    if (!loss.valid()) {
        throw Error("backward: invalid loss value");
    }
    if (!is_scalar(loss.tensor())) {
        throw ShapeError("backward: loss must be scalar 1x1x1x1, got " +
                         loss.tensor().shape_str());
    }
    std::vector<Node*> order = toposort(loss.node().get());
    for (Node* node : order) {
        node->grad = Tensor(node->value.n(), node->value.c(), node->value.h(), node->value.w());
    }
    if (order.empty()) {
        return; // loss does not depend on anything trainable
    }
    loss.node()->grad[0] = 1.0;
    for (Node* node : order) {
        if (node->backprop) {
            node->backprop(*node);
        }
    }
}

GradMap backward(const Value& loss, const ParamStore& store) {
    backward(loss);
    GradMap grads;
    // Collect parameter leaves from the reachable subgraph.
    std::vector<Node*> order = toposort(loss.node().get());
    for (Node* node : order) {
        if (node->param_name.empty()) {
            continue;
        }
        auto it = grads.find(node->param_name);
        if (it == grads.end()) {
            grads.emplace(node->param_name, node->grad);
        } else {
            add_inplace(it->second, node->grad);
        }
    }
    for (const std::string& name : store.names()) {
        if (!grads.count(name)) {
            const Tensor& p = store.get(name);
            grads.emplace(name, Tensor(p.n(), p.c(), p.h(), p.w()));
        }
    }
    return grads;
}

void ParamStore::add(const std::string& name, Tensor value) {
    if (params_.count(name)) {
        throw Error("parameter '" + name + "' already registered");
    }
    Entry e;
    e.m = Tensor(value.n(), value.c(), value.h(), value.w());
    e.v = Tensor(value.n(), value.c(), value.h(), value.w());
    e.value = std::move(value);
    params_.emplace(name, std::move(e));
}

bool ParamStore::has(const std::string& name) const {
    return params_.count(name) > 0;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw Error("unknown parameter '" + name + "'");
    }
    return it->second.value;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw Error("unknown parameter '" + name + "'");
    }
    return it->second.value;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, entry] : params_) {
        out.push_back(name);
    }
    return out;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, entry] : params_) {
        total += entry.value.size();
    }
    return total;
}

Value ParamStore::leaf(const std::string& name) const {
    Value v = ad::leaf(get(name), true);
    v.node()->param_name = name;
    return v;
}

void ParamStore::adam_step(const GradMap& grads, const AdamConfig& cfg) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, entry] : params_) {
        const Tensor* g = nullptr;
        auto it = grads.find(name);
        if (it != grads.end()) {
            if (!it->second.same_shape(entry.value)) {
                throw ShapeError("adam_step: gradient " + it->second.shape_str() +
                                 " does not match parameter '" + name + "' " +
                                 entry.value.shape_str());
            }
            g = &it->second;
        }
        for (std::size_t i = 0; i < entry.value.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            if (cfg.weight_decay != 0.0) {
                entry.value[i] -= cfg.lr * cfg.weight_decay * entry.value[i];
            }
            entry.m[i] = cfg.beta1 * entry.m[i] + (1.0 - cfg.beta1) * gi;
            entry.v[i] = cfg.beta2 * entry.v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double m_hat = entry.m[i] / bc1;
            const double v_hat = entry.v[i] / bc2;
            entry.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

Tensor he_uniform(int n, int c, int h, int w, Rng& rng) {
    const double fan_in = static_cast<double>(c) * h * w;
    const double bound = std::sqrt(2.0 / fan_in);
    Tensor t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(-bound, bound);
    }
    return t;
}

} // namespace memc::ad
