#include "memc/projection.hpp"

#include <cmath>

#include "memc/error.hpp"

namespace memc {

namespace {

void check_flow_2ch(const FlowField& flow, const char* op) {
    if (flow.c() != 2) {
        throw ShapeError(std::string(op) + ": flow must have 2 channels, got " +
                         flow.shape_str());
    }
}

// std::round is half-away-from-zero, the tie rule fixed for this layer.
inline int round_target(double v) {
    return static_cast<int>(std::round(v));
}

} // namespace

ProjectionResult project_flow(const FlowField& flow_in) {
    check_flow_2ch(flow_in, "project_flow");
    if (!flow_in.all_finite()) {
        throw NumericError("project_flow: flow field contains non-finite values");
    }
    const int h = flow_in.h();
    const int w = flow_in.w();
    ProjectionResult res;
    res.flow = Tensor(flow_in.n(), 2, h, w);
    res.count = Tensor(flow_in.n(), 1, h, w);
    res.hole_mask = Tensor(flow_in.n(), 1, h, w);

    for (int n = 0; n < flow_in.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double hu = flow_in.at(n, 0, y, x) / 2.0;
                const double hv = flow_in.at(n, 1, y, x) / 2.0;
                const int tx = round_target(x + hu);
                const int ty = round_target(y + hv);
                if (tx < 0 || tx >= w || ty < 0 || ty >= h) {
                    continue;
                }
                res.flow.at(n, 0, ty, tx) += hu;
                res.flow.at(n, 1, ty, tx) += hv;
                res.count.at(n, 0, ty, tx) += 1.0;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double cnt = res.count.at(n, 0, y, x);
                if (cnt > 0.0) {
                    res.flow.at(n, 0, y, x) = -res.flow.at(n, 0, y, x) / cnt;
                    res.flow.at(n, 1, y, x) = -res.flow.at(n, 1, y, x) / cnt;
                } else {
                    res.hole_mask.at(n, 0, y, x) = 1.0;
                }
            }
        }
    }
    res.flow = fill_holes_outside_in(res.flow, res.hole_mask);
    return res;
}

FlowField fill_holes_outside_in(const FlowField& flow, const Tensor& hole_mask) {
    check_flow_2ch(flow, "fill_holes_outside_in");
    if (hole_mask.n() != flow.n() || hole_mask.c() != 1 || hole_mask.h() != flow.h() ||
        hole_mask.w() != flow.w()) {
        throw ShapeError("fill_holes_outside_in: hole mask " + hole_mask.shape_str() +
                         " does not match flow " + flow.shape_str());
    }
    const int h = flow.h();
    const int w = flow.w();
    FlowField out = flow;
    for (int n = 0; n < flow.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (hole_mask.at(n, 0, y, x) == 0.0) {
                    continue;
                }
                double su = 0.0, sv = 0.0;
                int found = 0;
                // First pre-fill non-hole pixel in each of the four directions.
                for (int xx = x - 1; xx >= 0; --xx) {
                    if (hole_mask.at(n, 0, y, xx) == 0.0) {
                        su += flow.at(n, 0, y, xx);
                        sv += flow.at(n, 1, y, xx);
                        ++found;
                        break;
                    }
                }
                for (int xx = x + 1; xx < w; ++xx) {
                    if (hole_mask.at(n, 0, y, xx) == 0.0) {
                        su += flow.at(n, 0, y, xx);
                        sv += flow.at(n, 1, y, xx);
                        ++found;
                        break;
                    }
                }
                for (int yy = y - 1; yy >= 0; --yy) {
                    if (hole_mask.at(n, 0, yy, x) == 0.0) {
                        su += flow.at(n, 0, yy, x);
                        sv += flow.at(n, 1, yy, x);
                        ++found;
                        break;
                    }
                }
                for (int yy = y + 1; yy < h; ++yy) {
                    if (hole_mask.at(n, 0, yy, x) == 0.0) {
                        su += flow.at(n, 0, yy, x);
                        sv += flow.at(n, 1, yy, x);
                        ++found;
                        break;
                    }
                }
                out.at(n, 0, y, x) = found > 0 ? su / found : 0.0;
                out.at(n, 1, y, x) = found > 0 ? sv / found : 0.0;
            }
        }
    }
    return out;
}

FlowField project_flow_backward(const FlowField& flow_in, const ProjectionResult& result,
                                const FlowField& grad_out) {
    check_flow_2ch(flow_in, "project_flow_backward");
    if (!grad_out.same_shape(flow_in)) {
        throw ShapeError("project_flow_backward: grad_out " + grad_out.shape_str() +
                         " does not match flow " + flow_in.shape_str());
    }
    if (!result.flow.same_shape(flow_in)) {
        throw ShapeError("project_flow_backward: projection result " +
                         result.flow.shape_str() + " does not match flow " +
                         flow_in.shape_str());
    }
    const int h = flow_in.h();
    const int w = flow_in.w();
    FlowField grad_in(flow_in.n(), 2, h, w);
    for (int n = 0; n < flow_in.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int tx = round_target(x + flow_in.at(n, 0, y, x) / 2.0);
                const int ty = round_target(y + flow_in.at(n, 1, y, x) / 2.0);
                if (tx < 0 || tx >= w || ty < 0 || ty >= h) {
                    continue;
                }
                const double cnt = result.count.at(n, 0, ty, tx);
                grad_in.at(n, 0, y, x) = -grad_out.at(n, 0, ty, tx) / (2.0 * cnt);
                grad_in.at(n, 1, y, x) = -grad_out.at(n, 1, ty, tx) / (2.0 * cnt);
            }
        }
    }
    return grad_in;
}

} // namespace memc

namespace memc::ad {

Value project_flow(const Value& flow_in, memc::ProjectionResult* side) {
    memc::ProjectionResult res = memc::project_flow(flow_in.tensor());
    if (side) {
        *side = res;
    }
    auto node = std::make_shared<Node>();
    node->value = res.flow;
    node->inputs = {flow_in.node()};
    node->requires_grad = flow_in.requires_grad();
    node->backprop = [saved = std::move(res)](Node& self) {
        accumulate_grad(*self.inputs[0],
                        project_flow_backward(self.inputs[0]->value, saved, self.grad));
    };
    return Value(node);
}

} // namespace memc::ad
