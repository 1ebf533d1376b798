// Toy-scale estimation networks wired to the adaptive warping and flow
// projection layers: the full frame interpolation pipeline (joint and
// sequential variants), the multi-frame enhancement pipeline, a training
// loop, and synthetic data generation.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memc/autodiff.hpp"
#include "memc/blend.hpp"
#include "memc/projection.hpp"
#include "memc/rng.hpp"
#include "memc/tensor.hpp"
#include "memc/warp.hpp"

namespace memc {

enum class PipelineMode {
    interpolate_joint,
    interpolate_sequential,
    enhance_sr,
    enhance_dn,
    enhance_db,
};

std::string to_string(PipelineMode mode);
PipelineMode pipeline_mode_from_string(const std::string& name);

struct PipelineConfig {
    PipelineMode mode = PipelineMode::interpolate_joint;
    int kernel_size = 4;      // K, the warp window side (even)
    int context_channels = 8;
    int postproc_channels = 16;
    int residual_blocks = 2;  // enhancement net depth
    int temporal_radius = 3;  // L; enhancement consumes 2L+1 frames
    bool aug_hflip = false;
    bool aug_vflip = false;
    bool aug_time_reverse = false;
    bool kernel_softmax = false;
    bool mask_sigmoid = false;
    std::uint64_t seed = 0;

    bool is_enhance() const {
        return mode == PipelineMode::enhance_sr || mode == PipelineMode::enhance_dn ||
               mode == PipelineMode::enhance_db;
    }
    void validate() const;
};

// Intermediate products of one interpolation pass, exposed for inspection
// and the CLI dump options.
struct InterpolationDiagnostics {
    Tensor blended;
    Tensor flow_fwd;  // estimated prev -> next
    Tensor flow_bwd;  // estimated next -> prev
    Tensor proj_to_prev; // projected flow t -> t-1
    Tensor proj_to_next; // projected flow t -> t+1
    Tensor hole_prev;    // pre-fill hole mask of proj_to_prev
    Tensor hole_next;
    Tensor kernels_prev;
    Tensor kernels_next;
    Tensor mask_prev;
    Tensor mask_next;
    Tensor context_prev; // warped (aligned) context features
    Tensor context_next;
};

class Pipeline {
public:
    // Fresh He-initialized parameters from config.seed.
    explicit Pipeline(const PipelineConfig& config);
    // Adopt existing parameters; names and shapes must match the config.
    Pipeline(const PipelineConfig& config, ad::ParamStore store);

    const PipelineConfig& config() const { return config_; }
    const ad::ParamStore& params() const { return params_; }
    ad::ParamStore& params() { return params_; }
    std::size_t parameter_count() const { return params_.parameter_count(); }

    // Synthesizes the middle frame between two reference frames.
    Tensor interpolate(const Tensor& frame_prev, const Tensor& frame_next,
                       InterpolationDiagnostics* diag = nullptr) const;

    // Restores the center frame of an odd-length frame window.
    Tensor enhance(const std::vector<Tensor>& frames) const;

    // One optimization step on a (prev, gt, next) triplet; returns the loss.
    double train_step(const Tensor& frame_prev, const Tensor& gt, const Tensor& frame_next,
                      double lr);
    // One optimization step for enhancement: frames in, clean center target.
    double train_step_enhance(const std::vector<Tensor>& frames, const Tensor& gt, double lr);

    // Tape-level forward passes; public so gradient checks can differentiate
    // straight through the assembled graph.
    struct InterpolationTape {
        ad::Value final;
        ad::Value blended;
        ad::Value mask_prev;
        ad::Value mask_next;
    };
    InterpolationTape forward_interpolate(const ad::Value& frame_prev,
                                          const ad::Value& frame_next,
                                          InterpolationDiagnostics* diag = nullptr) const;
    ad::Value forward_enhance(const std::vector<ad::Value>& frames) const;
    ad::Value interpolation_loss(const InterpolationTape& tape, const ad::Value& gt) const;

private:
    void init_params();
    void validate_store() const;
    ad::Value conv3x3(const ad::Value& x, const std::string& name) const;
    ad::Value trunk(const ad::Value& six_channel_input, const std::string& prefix) const;

    PipelineConfig config_;
    ad::ParamStore params_;
};

// Loss constants from the training objective.
struct LossConfig {
    double alpha = 1e-3;
    double beta = 2e-3;
    double eps = 1e-6;
};

struct AdamDefaults {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;
};

// --- Synthetic data ----------------------------------------------------------

enum class SyntheticPattern { checker, gradient_blob };
SyntheticPattern pattern_from_string(const std::string& name);

struct Triplet {
    Tensor prev, gt, next;
};

struct PixelShift {
    int dx = 0;
    int dy = 0;
};

// Frames are the pattern translated by 0, shift, 2*shift with periodic wrap,
// so the middle frame is exactly constructible.
Triplet make_synthetic_triplet(SyntheticPattern pattern, PixelShift shift, int size,
                               std::uint64_t seed);

// count frames (odd), frame k translated by k*shift; the center is the
// enhancement target.
std::vector<Tensor> make_synthetic_sequence(SyntheticPattern pattern, PixelShift shift,
                                            int size, int count, std::uint64_t seed);

Tensor add_gaussian_noise(const Tensor& t, double sigma, Rng& rng);
Tensor block_average(const Tensor& t, int block); // blocking artifacts
Tensor down_up(const Tensor& t);                  // avgpool2 then nearest-upsample2

// Per-task degradation of clean enhancement inputs (dn: Gaussian sigma
// 20/255; sr: down_up; db: 4x4 block averaging).
std::vector<Tensor> degrade_sequence(const std::vector<Tensor>& frames, PipelineMode task,
                                     std::uint64_t seed);

// --- Training loop -----------------------------------------------------------

struct TrainReport {
    std::vector<double> losses;
};

// Repeated train_step on one triplet, honoring the config augmentation flags.
TrainReport train_toy(Pipeline& pipeline, const Triplet& triplet, int steps, double lr);
TrainReport train_toy_enhance(Pipeline& pipeline, const std::vector<Tensor>& degraded,
                              const Tensor& clean_center, int steps, double lr);

// --- Config <-> tensor packing for model files -------------------------------

Tensor encode_config(const PipelineConfig& config);
PipelineConfig decode_config(const Tensor& t);

} // namespace memc
