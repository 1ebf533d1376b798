#include "memc/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "memc/error.hpp"

namespace memc {

std::string to_string(PipelineMode mode) {
    switch (mode) {
    case PipelineMode::interpolate_joint: return "interpolate-joint";
    case PipelineMode::interpolate_sequential: return "interpolate-sequential";
    case PipelineMode::enhance_sr: return "enhance-sr";
    case PipelineMode::enhance_dn: return "enhance-dn";
    case PipelineMode::enhance_db: return "enhance-db";
    }
    throw Error("unknown pipeline mode");
}

PipelineMode pipeline_mode_from_string(const std::string& name) {
    if (name == "interpolate-joint") return PipelineMode::interpolate_joint;
    if (name == "interpolate-sequential") return PipelineMode::interpolate_sequential;
    if (name == "enhance-sr") return PipelineMode::enhance_sr;
    if (name == "enhance-dn") return PipelineMode::enhance_dn;
    if (name == "enhance-db") return PipelineMode::enhance_db;
    throw IoError("unknown pipeline mode '" + name + "'");
}

SyntheticPattern pattern_from_string(const std::string& name) {
    if (name == "checker") return SyntheticPattern::checker;
    if (name == "gradient-blob") return SyntheticPattern::gradient_blob;
    throw IoError("unknown synthetic pattern '" + name + "'");
}

void PipelineConfig::validate() const {
    if (kernel_size < 2 || kernel_size % 2 != 0) {
        throw Error("config: kernel_size must be even and >= 2, got " +
                    std::to_string(kernel_size));
    }
    if (context_channels < 1 || postproc_channels < 1) {
        throw Error("config: channel counts must be positive");
    }
    if (residual_blocks < 1) {
        throw Error("config: residual_blocks must be >= 1");
    }
    if (temporal_radius < 0) {
        throw Error("config: temporal_radius must be >= 0");
    }
}

namespace {

constexpr int kTrunkChannels = 32;

void check_stage(const Tensor& t, const char* stage) {
    if (!t.all_finite()) {
        throw NumericError(std::string("non-finite values at stage '") + stage + "'");
    }
}

void check_frame(const Tensor& frame, const char* what) {
    if (frame.c() != 3) {
        throw ShapeError(std::string(what) + " must have 3 channels, got " +
                         frame.shape_str());
    }
}

int postproc_in_channels(const PipelineConfig& cfg) {
    const int k2 = cfg.kernel_size * cfg.kernel_size;
    return 3 + 4 + 2 * k2 + 2 + 2 * cfg.context_channels;
}

int enhance_in_channels(const PipelineConfig& cfg) {
    const int k2 = cfg.kernel_size * cfg.kernel_size;
    const int neighbors = 2 * cfg.temporal_radius;
    return 3 + neighbors * (3 + 2 + k2 + cfg.context_channels);
}

} // namespace

Pipeline::Pipeline(const PipelineConfig& config) : config_(config) {
    config_.validate();
    init_params();
}

Pipeline::Pipeline(const PipelineConfig& config, ad::ParamStore store)
    : config_(config), params_(std::move(store)) {
    config_.validate();
    validate_store();
}

void Pipeline::init_params() {
    Rng rng(config_.seed);
    auto add_conv = [&](const std::string& name, int out_c, int in_c) {
        params_.add(name + ".weight", ad::he_uniform(out_c, in_c, 3, 3, rng));
        params_.add(name + ".bias", Tensor(1, out_c, 1, 1));
    };
    const int k2 = config_.kernel_size * config_.kernel_size;

    add_conv("flow.conv1", kTrunkChannels, 6);
    add_conv("flow.conv2", kTrunkChannels, kTrunkChannels);
    add_conv("flow.conv3", 2, kTrunkChannels);

    add_conv("kernel.conv1", kTrunkChannels, 6);
    add_conv("kernel.conv2", kTrunkChannels, kTrunkChannels);
    add_conv("kernel.conv3", 2 * k2, kTrunkChannels);

    add_conv("ctx.conv1", config_.context_channels, 3);

    if (config_.is_enhance()) {
        add_conv("enhance.head", config_.postproc_channels, enhance_in_channels(config_));
        for (int i = 1; i <= config_.residual_blocks; ++i) {
            const std::string prefix = "enhance.res" + std::to_string(i);
            add_conv(prefix + ".conv1", config_.postproc_channels, config_.postproc_channels);
            add_conv(prefix + ".conv2", config_.postproc_channels, config_.postproc_channels);
        }
        add_conv("enhance.tail", 3, config_.postproc_channels);
    } else {
        add_conv("mask.conv1", kTrunkChannels, 6);
        add_conv("mask.conv2", kTrunkChannels, kTrunkChannels);
        add_conv("mask.conv3", 2, kTrunkChannels);

        add_conv("post.conv1", config_.postproc_channels, postproc_in_channels(config_));
        add_conv("post.conv2", config_.postproc_channels, config_.postproc_channels);
        add_conv("post.conv3", config_.postproc_channels, config_.postproc_channels);
        add_conv("post.conv4", 3, config_.postproc_channels);
    }
}

void Pipeline::validate_store() const {
    // Compare against the parameter set a fresh pipeline of this config has.
    Pipeline reference(config_);
    const std::vector<std::string> expected = reference.params_.names();
    const std::vector<std::string> actual = params_.names();
    if (expected != actual) {
        throw Error("parameter store does not match pipeline config (expected " +
                    std::to_string(expected.size()) + " tensors, got " +
                    std::to_string(actual.size()) + " or names differ)");
    }
    for (const std::string& name : expected) {
        if (!reference.params_.get(name).same_shape(params_.get(name))) {
            throw ShapeError("parameter '" + name + "' has shape " +
                             params_.get(name).shape_str() + ", config requires " +
                             reference.params_.get(name).shape_str());
        }
    }
}

ad::Value Pipeline::conv3x3(const ad::Value& x, const std::string& name) const {
    return ad::conv2d(x, params_.leaf(name + ".weight"), params_.leaf(name + ".bias"), 1, 1);
}

ad::Value Pipeline::trunk(const ad::Value& six_channel_input, const std::string& prefix) const {
    ad::Value h = ad::relu(conv3x3(six_channel_input, prefix + ".conv1"));
    h = ad::relu(conv3x3(h, prefix + ".conv2"));
    return conv3x3(h, prefix + ".conv3");
}

Pipeline::InterpolationTape Pipeline::forward_interpolate(
    const ad::Value& frame_prev, const ad::Value& frame_next,
    InterpolationDiagnostics* diag) const {
    if (config_.is_enhance()) {
        throw Error("interpolate called on an enhancement-mode pipeline");
    }
    check_frame(frame_prev.tensor(), "frame_prev");
    check_frame(frame_next.tensor(), "frame_next");
    if (!frame_prev.tensor().same_shape(frame_next.tensor())) {
        throw ShapeError("interpolate: frames " + frame_prev.tensor().shape_str() + " and " +
                         frame_next.tensor().shape_str() + " differ");
    }
    const int k2 = config_.kernel_size * config_.kernel_size;

    // Motion estimation: same network, both frame orders.
    const ad::Value flow_fwd = trunk(ad::concat_channels({frame_prev, frame_next}), "flow");
    const ad::Value flow_bwd = trunk(ad::concat_channels({frame_next, frame_prev}), "flow");
    check_stage(flow_fwd.tensor(), "flow estimation");
    check_stage(flow_bwd.tensor(), "flow estimation");

    ProjectionResult side_prev, side_next;
    const ad::Value proj_prev = ad::project_flow(flow_fwd, &side_prev);
    const ad::Value proj_next = ad::project_flow(flow_bwd, &side_next);
    check_stage(proj_prev.tensor(), "flow projection");
    check_stage(proj_next.tensor(), "flow projection");

    const bool sequential = config_.mode == PipelineMode::interpolate_sequential;

    // Sequential mode compensates with plain bilinear warping first and runs
    // the estimation networks on the warped frames; the joint mode estimates
    // everything against the original frames.
    ad::Value est_prev = frame_prev;
    ad::Value est_next = frame_next;
    if (sequential) {
        est_prev = ad::bilinear_warp(frame_prev, proj_prev);
        est_next = ad::bilinear_warp(frame_next, proj_next);
        check_stage(est_prev.tensor(), "bilinear warping");
        check_stage(est_next.tensor(), "bilinear warping");
    }

    const ad::Value est_pair = ad::concat_channels({est_prev, est_next});
    ad::Value kernels = trunk(est_pair, "kernel");
    check_stage(kernels.tensor(), "kernel estimation");
    ad::Value kernels_prev = ad::slice_channels(kernels, 0, k2);
    ad::Value kernels_next = ad::slice_channels(kernels, k2, 2 * k2);
    if (config_.kernel_softmax) {
        kernels_prev = ad::softmax_channels(kernels_prev);
        kernels_next = ad::softmax_channels(kernels_next);
    }

    ad::Value masks = trunk(est_pair, "mask");
    check_stage(masks.tensor(), "mask estimation");
    ad::Value mask_prev = ad::slice_channels(masks, 0, 1);
    ad::Value mask_next = ad::slice_channels(masks, 1, 2);
    if (config_.mask_sigmoid) {
        mask_prev = ad::sigmoid(mask_prev);
        mask_next = ad::sigmoid(mask_next);
    }

    const ad::Value ctx_prev = ad::relu(conv3x3(est_prev, "ctx.conv1"));
    const ad::Value ctx_next = ad::relu(conv3x3(est_next, "ctx.conv1"));
    check_stage(ctx_prev.tensor(), "context extraction");

    ad::Value warped_prev, warped_next, aligned_ctx_prev, aligned_ctx_next;
    if (sequential) {
        warped_prev = ad::local_conv(est_prev, kernels_prev);
        warped_next = ad::local_conv(est_next, kernels_next);
        aligned_ctx_prev = ctx_prev;
        aligned_ctx_next = ctx_next;
    } else {
        warped_prev = ad::adaptive_warp(frame_prev, proj_prev, kernels_prev);
        warped_next = ad::adaptive_warp(frame_next, proj_next, kernels_next);
        aligned_ctx_prev = ad::adaptive_warp(ctx_prev, proj_prev, kernels_prev);
        aligned_ctx_next = ad::adaptive_warp(ctx_next, proj_next, kernels_next);
    }
    check_stage(warped_prev.tensor(), "warping");
    check_stage(warped_next.tensor(), "warping");

    const ad::Value blended = ad::blend(warped_prev, warped_next, mask_prev, mask_next);
    check_stage(blended.tensor(), "blending");

    const ad::Value post_in = ad::concat_channels({blended, proj_prev, proj_next, kernels_prev,
                                                   kernels_next, mask_prev, mask_next,
                                                   aligned_ctx_prev, aligned_ctx_next});
    ad::Value h = ad::relu(conv3x3(post_in, "post.conv1"));
    h = ad::relu(conv3x3(h, "post.conv2"));
    h = ad::relu(conv3x3(h, "post.conv3"));
    const ad::Value residual = conv3x3(h, "post.conv4");
    const ad::Value final = ad::add(blended, residual);
    check_stage(final.tensor(), "post-processing");

    if (diag) {
        diag->blended = blended.tensor();
        diag->flow_fwd = flow_fwd.tensor();
        diag->flow_bwd = flow_bwd.tensor();
        diag->proj_to_prev = proj_prev.tensor();
        diag->proj_to_next = proj_next.tensor();
        diag->hole_prev = side_prev.hole_mask;
        diag->hole_next = side_next.hole_mask;
        diag->kernels_prev = kernels_prev.tensor();
        diag->kernels_next = kernels_next.tensor();
        diag->mask_prev = mask_prev.tensor();
        diag->mask_next = mask_next.tensor();
        diag->context_prev = aligned_ctx_prev.tensor();
        diag->context_next = aligned_ctx_next.tensor();
    }
    return {final, blended, mask_prev, mask_next};
}

ad::Value Pipeline::forward_enhance(const std::vector<ad::Value>& frames) const {
    if (!config_.is_enhance()) {
        throw Error("enhance called on an interpolation-mode pipeline");
    }
    if (frames.size() % 2 == 0 || frames.empty()) {
        throw ShapeError("enhance: frame count must be odd, got " +
                         std::to_string(frames.size()));
    }
    if (static_cast<int>(frames.size()) != 2 * config_.temporal_radius + 1) {
        throw ShapeError("enhance: config expects " +
                         std::to_string(2 * config_.temporal_radius + 1) + " frames, got " +
                         std::to_string(frames.size()));
    }
    const int center = config_.temporal_radius;
    for (const ad::Value& f : frames) {
        check_frame(f.tensor(), "enhance frame");
        if (!f.tensor().same_shape(frames[center].tensor())) {
            throw ShapeError("enhance: frame shapes differ");
        }
    }
    const int k2 = config_.kernel_size * config_.kernel_size;
    const ad::Value& center_frame = frames[center];

    std::vector<ad::Value> warped, flows, kernel_fields, contexts;
    for (int k = 0; k < static_cast<int>(frames.size()); ++k) {
        if (k == center) {
            continue;
        }
        const ad::Value pair = ad::concat_channels({center_frame, frames[k]});
        const ad::Value flow_k = trunk(pair, "flow");
        check_stage(flow_k.tensor(), "flow estimation");
        // The kernel trunk emits fields for both inputs; the neighbor is the
        // second input, so its kernels are the second half.
        ad::Value kern_k = ad::slice_channels(trunk(pair, "kernel"), k2, 2 * k2);
        if (config_.kernel_softmax) {
            kern_k = ad::softmax_channels(kern_k);
        }
        check_stage(kern_k.tensor(), "kernel estimation");
        const ad::Value ctx_k = ad::relu(conv3x3(frames[k], "ctx.conv1"));
        warped.push_back(ad::adaptive_warp(frames[k], flow_k, kern_k));
        contexts.push_back(ad::adaptive_warp(ctx_k, flow_k, kern_k));
        flows.push_back(flow_k);
        kernel_fields.push_back(kern_k);
        check_stage(warped.back().tensor(), "warping");
    }

    std::vector<ad::Value> parts{center_frame};
    for (const auto& v : warped) parts.push_back(v);
    for (const auto& v : flows) parts.push_back(v);
    for (const auto& v : kernel_fields) parts.push_back(v);
    for (const auto& v : contexts) parts.push_back(v);

    ad::Value h = ad::relu(conv3x3(ad::concat_channels(parts), "enhance.head"));
    for (int i = 1; i <= config_.residual_blocks; ++i) {
        const std::string prefix = "enhance.res" + std::to_string(i);
        ad::Value r = ad::relu(conv3x3(h, prefix + ".conv1"));
        r = conv3x3(r, prefix + ".conv2");
        h = ad::add(h, r);
    }
    const ad::Value residual = conv3x3(h, "enhance.tail");
    const ad::Value out = ad::add(center_frame, residual);
    check_stage(out.tensor(), "enhancement");
    return out;
}

ad::Value Pipeline::interpolation_loss(const InterpolationTape& tape,
                                       const ad::Value& gt) const {
    const LossConfig loss;
    return ad::memc_loss(tape.final, tape.blended, gt, tape.mask_prev, tape.mask_next,
                         loss.alpha, loss.beta, loss.eps);
}

Tensor Pipeline::interpolate(const Tensor& frame_prev, const Tensor& frame_next,
                             InterpolationDiagnostics* diag) const {
    const InterpolationTape tape =
        forward_interpolate(ad::constant(frame_prev), ad::constant(frame_next), diag);
    return tape.final.tensor();
}

Tensor Pipeline::enhance(const std::vector<Tensor>& frames) const {
    std::vector<ad::Value> values;
    values.reserve(frames.size());
    for (const Tensor& f : frames) {
        values.push_back(ad::constant(f));
    }
    return forward_enhance(values).tensor();
}

double Pipeline::train_step(const Tensor& frame_prev, const Tensor& gt,
                            const Tensor& frame_next, double lr) {
    if (!gt.same_shape(frame_prev)) {
        throw ShapeError("train_step: ground truth " + gt.shape_str() +
                         " does not match frames " + frame_prev.shape_str());
    }
    const InterpolationTape tape =
        forward_interpolate(ad::constant(frame_prev), ad::constant(frame_next), nullptr);
    const ad::Value loss = interpolation_loss(tape, ad::constant(gt));
    const double loss_value = loss.tensor()[0];
    if (!std::isfinite(loss_value)) {
        throw NumericError("training diverged: non-finite loss");
    }
    const ad::GradMap grads = ad::backward(loss, params_);
    const AdamDefaults adam;
    params_.adam_step(grads, {lr, adam.beta1, adam.beta2, adam.eps, adam.weight_decay});
    return loss_value;
}

double Pipeline::train_step_enhance(const std::vector<Tensor>& frames, const Tensor& gt,
                                    double lr) {
    std::vector<ad::Value> values;
    values.reserve(frames.size());
    for (const Tensor& f : frames) {
        values.push_back(ad::constant(f));
    }
    const ad::Value out = forward_enhance(values);
    if (!gt.same_shape(out.tensor())) {
        throw ShapeError("train_step_enhance: ground truth " + gt.shape_str() +
                         " does not match output " + out.tensor().shape_str());
    }
    const LossConfig loss_cfg;
    const ad::Value loss = ad::charbonnier_sum(ad::sub(out, ad::constant(gt)), loss_cfg.eps);
    const double loss_value = loss.tensor()[0];
    if (!std::isfinite(loss_value)) {
        throw NumericError("training diverged: non-finite loss");
    }
    const ad::GradMap grads = ad::backward(loss, params_);
    const AdamDefaults adam;
    params_.adam_step(grads, {lr, adam.beta1, adam.beta2, adam.eps, adam.weight_decay});
    return loss_value;
}

// --- Synthetic data ----------------------------------------------------------

namespace {

Tensor make_pattern(SyntheticPattern pattern, int size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor img(1, 3, size, size);
    if (pattern == SyntheticPattern::checker) {
        const int cell = 4;
        const int cells = (size + cell - 1) / cell;
        std::vector<double> colors(static_cast<std::size_t>(cells) * cells * 3);
        for (double& v : colors) {
            v = rng.uniform();
        }
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const std::size_t idx =
                    (static_cast<std::size_t>(y / cell) * cells + x / cell) * 3;
                for (int c = 0; c < 3; ++c) {
                    img.at(0, c, y, x) = colors[idx + c];
                }
            }
        }
    } else {
        // Smooth diagonal gradient plus two random Gaussian blobs.
        struct Blob {
            double cy, cx, radius, amp[3];
        };
        Blob blobs[2];
        for (Blob& b : blobs) {
            b.cy = rng.uniform(0.2, 0.8) * size;
            b.cx = rng.uniform(0.2, 0.8) * size;
            b.radius = rng.uniform(0.15, 0.3) * size;
            for (double& a : b.amp) {
                a = rng.uniform(-0.5, 0.5);
            }
        }
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                for (int c = 0; c < 3; ++c) {
                    double v = 0.25 + 0.5 * (x + y) / (2.0 * size);
                    for (const Blob& b : blobs) {
                        const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
                        v += b.amp[c] * std::exp(-d2 / (2.0 * b.radius * b.radius));
                    }
                    img.at(0, c, y, x) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    return img;
}

} // namespace

Triplet make_synthetic_triplet(SyntheticPattern pattern, PixelShift shift, int size,
                               std::uint64_t seed) {
    if (std::abs(shift.dx) > size / 4 || std::abs(shift.dy) > size / 4) {
        throw Error("make_synthetic_triplet: |shift| must be <= size/4");
    }
    const Tensor base = make_pattern(pattern, size, seed);
    Triplet t;
    t.prev = base;
    t.gt = roll2d(base, shift.dy, shift.dx);
    t.next = roll2d(base, 2 * shift.dy, 2 * shift.dx);
    return t;
}

std::vector<Tensor> make_synthetic_sequence(SyntheticPattern pattern, PixelShift shift,
                                            int size, int count, std::uint64_t seed) {
    if (count % 2 == 0 || count < 1) {
        throw Error("make_synthetic_sequence: frame count must be odd and positive");
    }
    const Tensor base = make_pattern(pattern, size, seed);
    std::vector<Tensor> frames;
    frames.reserve(count);
    for (int k = 0; k < count; ++k) {
        frames.push_back(roll2d(base, k * shift.dy, k * shift.dx));
    }
    return frames;
}

Tensor add_gaussian_noise(const Tensor& t, double sigma, Rng& rng) {
    Tensor out = t;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += sigma * rng.normal();
    }
    return out;
}

Tensor block_average(const Tensor& t, int block) {
    Tensor out = t;
    for (int n = 0; n < t.n(); ++n) {
        for (int c = 0; c < t.c(); ++c) {
            for (int y0 = 0; y0 < t.h(); y0 += block) {
                for (int x0 = 0; x0 < t.w(); x0 += block) {
                    const int y1 = std::min(y0 + block, t.h());
                    const int x1 = std::min(x0 + block, t.w());
                    double mean = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) {
                            mean += t.at(n, c, y, x);
                        }
                    }
                    mean /= static_cast<double>((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) {
                            out.at(n, c, y, x) = mean;
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor down_up(const Tensor& t) {
    return upsample_nearest2(avgpool2(t));
}

std::vector<Tensor> degrade_sequence(const std::vector<Tensor>& frames, PipelineMode task,
                                     std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    out.reserve(frames.size());
    for (const Tensor& f : frames) {
        switch (task) {
        case PipelineMode::enhance_dn:
            out.push_back(add_gaussian_noise(f, 20.0 / 255.0, rng));
            break;
        case PipelineMode::enhance_sr:
            out.push_back(down_up(f));
            break;
        case PipelineMode::enhance_db:
            out.push_back(block_average(f, 4));
            break;
        default:
            throw Error("degrade_sequence: not an enhancement task");
        }
    }
    return out;
}

// --- Training loop -----------------------------------------------------------

TrainReport train_toy(Pipeline& pipeline, const Triplet& triplet, int steps, double lr) {
    const PipelineConfig& cfg = pipeline.config();
    Rng aug_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainReport report;
    report.losses.reserve(steps);
    for (int step = 0; step < steps; ++step) {
        Tensor prev = triplet.prev;
        Tensor gt = triplet.gt;
        Tensor next = triplet.next;
        if (cfg.aug_hflip && aug_rng.uniform() < 0.5) {
            prev = hflip(prev);
            gt = hflip(gt);
            next = hflip(next);
        }
        if (cfg.aug_vflip && aug_rng.uniform() < 0.5) {
            prev = vflip(prev);
            gt = vflip(gt);
            next = vflip(next);
        }
        if (cfg.aug_time_reverse && aug_rng.uniform() < 0.5) {
            std::swap(prev, next);
        }
        report.losses.push_back(pipeline.train_step(prev, gt, next, lr));
    }
    return report;
}

TrainReport train_toy_enhance(Pipeline& pipeline, const std::vector<Tensor>& degraded,
                              const Tensor& clean_center, int steps, double lr) {
    const PipelineConfig& cfg = pipeline.config();
    Rng aug_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainReport report;
    report.losses.reserve(steps);
    for (int step = 0; step < steps; ++step) {
        std::vector<Tensor> frames = degraded;
        Tensor gt = clean_center;
        if (cfg.aug_hflip && aug_rng.uniform() < 0.5) {
            for (Tensor& f : frames) {
                f = hflip(f);
            }
            gt = hflip(gt);
        }
        if (cfg.aug_vflip && aug_rng.uniform() < 0.5) {
            for (Tensor& f : frames) {
                f = vflip(f);
            }
            gt = vflip(gt);
        }
        if (cfg.aug_time_reverse && aug_rng.uniform() < 0.5) {
            std::reverse(frames.begin(), frames.end());
        }
        report.losses.push_back(pipeline.train_step_enhance(frames, gt, lr));
    }
    return report;
}

// --- Config packing ----------------------------------------------------------

Tensor encode_config(const PipelineConfig& config) {
    Tensor t(1, 1, 1, 13);
    t[0] = static_cast<double>(static_cast<int>(config.mode));
    t[1] = config.kernel_size;
    t[2] = config.context_channels;
    t[3] = config.postproc_channels;
    t[4] = config.residual_blocks;
    t[5] = config.temporal_radius;
    t[6] = config.aug_hflip ? 1.0 : 0.0;
    t[7] = config.aug_vflip ? 1.0 : 0.0;
    t[8] = config.aug_time_reverse ? 1.0 : 0.0;
    t[9] = config.kernel_softmax ? 1.0 : 0.0;
    t[10] = config.mask_sigmoid ? 1.0 : 0.0;
    t[11] = static_cast<double>(config.seed & 0xffffffffULL);
    t[12] = static_cast<double>(config.seed >> 32);
    return t;
}

PipelineConfig decode_config(const Tensor& t) {
    if (t.n() != 1 || t.c() != 1 || t.h() != 1 || t.w() != 13) {
        throw IoError("model config record has shape " + t.shape_str() + ", expected 1x1x1x13");
    }
    const int mode_id = static_cast<int>(t[0]);
    if (mode_id < 0 || mode_id > 4) {
        throw IoError("model config has unknown mode id " + std::to_string(mode_id));
    }
    PipelineConfig cfg;
    cfg.mode = static_cast<PipelineMode>(mode_id);
    cfg.kernel_size = static_cast<int>(t[1]);
    cfg.context_channels = static_cast<int>(t[2]);
    cfg.postproc_channels = static_cast<int>(t[3]);
    cfg.residual_blocks = static_cast<int>(t[4]);
    cfg.temporal_radius = static_cast<int>(t[5]);
    cfg.aug_hflip = t[6] != 0.0;
    cfg.aug_vflip = t[7] != 0.0;
    cfg.aug_time_reverse = t[8] != 0.0;
    cfg.kernel_softmax = t[9] != 0.0;
    cfg.mask_sigmoid = t[10] != 0.0;
    cfg.seed = static_cast<std::uint64_t>(t[11]) |
               (static_cast<std::uint64_t>(t[12]) << 32);
    cfg.validate();
    return cfg;
}

} // namespace memc
