// Batch front-end for warping, flow projection, interpolation, toy training,
// enhancement, gradient checking, and image metrics.
//
// Exit codes: 0 success, 2 input/parse/config error, 3 shape mismatch,
// 4 numeric failure (non-finite values, divergence). Logs go to stderr;
// structured results (metrics, gradcheck) go to stdout as JSON.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "memc/error.hpp"
#include "memc/gradcheck.hpp"
#include "memc/io.hpp"
#include "memc/metrics.hpp"
#include "memc/pipeline.hpp"
#include "memc/projection.hpp"
#include "memc/tensor.hpp"
#include "memc/warp.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitShape = 3;
constexpr int kExitNumeric = 4;

// Kernel fields travel in the model container as a single tensor.
memc::Tensor read_kernel_field(const std::string& path) {
    const auto tensors = memc::read_model(path);
    if (tensors.size() == 1) {
        return tensors.begin()->second;
    }
    auto it = tensors.find("kernels");
    if (it == tensors.end()) {
        throw memc::IoError("kernel field file '" + path +
                            "' must hold one tensor or one named 'kernels'");
    }
    return it->second;
}

int cmd_warp(const std::string& image_path, const std::string& flow_path,
             const std::string& kernels_path, const std::string& out_path) {
    const memc::Tensor image = memc::read_image(image_path);
    const memc::FlowField flow = memc::read_flo(flow_path);
    if (flow.h() != image.h() || flow.w() != image.w()) {
        throw memc::ShapeError("flow " + flow.shape_str() + " does not match image " +
                               image.shape_str());
    }
    memc::Tensor warped;
    if (kernels_path.empty()) {
        warped = memc::bilinear_warp(image, flow);
    } else {
        warped = memc::adaptive_warp_forward(image, flow, read_kernel_field(kernels_path));
    }
    memc::write_image(out_path, memc::clamp01(warped));
    return kExitOk;
}

int cmd_project_flow(const std::string& flow_path, const std::string& out_path,
                     const std::string& holes_path) {
    const memc::FlowField flow = memc::read_flo(flow_path);
    const memc::ProjectionResult result = memc::project_flow(flow);
    memc::write_flo(out_path, result.flow);
    if (!holes_path.empty()) {
        // White marks pre-fill holes.
        memc::Tensor mask_rgb(1, 3, flow.h(), flow.w());
        for (int y = 0; y < flow.h(); ++y) {
            for (int x = 0; x < flow.w(); ++x) {
                for (int c = 0; c < 3; ++c) {
                    mask_rgb.at(0, c, y, x) = result.hole_mask.at(0, 0, y, x);
                }
            }
        }
        memc::write_image(holes_path, mask_rgb);
    }
    return kExitOk;
}

int cmd_interpolate(const std::string& prev_path, const std::string& next_path,
                    const std::string& model_path, const std::string& out_path,
                    const std::string& mode_override) {
    memc::Pipeline pipeline = memc::load_pipeline(model_path);
    if (!mode_override.empty()) {
        memc::PipelineConfig cfg = pipeline.config();
        cfg.mode = memc::pipeline_mode_from_string("interpolate-" + mode_override);
        memc::ad::ParamStore store;
        for (const std::string& name : pipeline.params().names()) {
            store.add(name, pipeline.params().get(name));
        }
        pipeline = memc::Pipeline(cfg, std::move(store));
    }
    const memc::Tensor prev = memc::read_image(prev_path);
    const memc::Tensor next = memc::read_image(next_path);
    const memc::Tensor out = pipeline.interpolate(prev, next);
    memc::write_image(out_path, memc::clamp01(out));
    return kExitOk;
}

int cmd_enhance(const std::string& task, const std::vector<std::string>& frame_paths,
                const std::string& model_path, const std::string& out_path) {
    memc::Pipeline pipeline = memc::load_pipeline(model_path);
    const memc::PipelineMode want = memc::pipeline_mode_from_string("enhance-" + task);
    if (pipeline.config().mode != want) {
        throw memc::IoError("model was trained for mode '" +
                            memc::to_string(pipeline.config().mode) + "', requested '" +
                            memc::to_string(want) + "'");
    }
    std::vector<memc::Tensor> frames;
    frames.reserve(frame_paths.size());
    for (const std::string& p : frame_paths) {
        frames.push_back(memc::read_image(p));
    }
    const memc::Tensor out = pipeline.enhance(frames);
    memc::write_image(out_path, memc::clamp01(out));
    return kExitOk;
}

// Strict config schema: every key must be known.
memc::PipelineConfig parse_pipeline_config(const json& doc, int* steps, double* lr,
                                           std::string* pattern, int* shift_x, int* shift_y,
                                           int* size) {
    static const std::vector<std::string> known = {
        "mode",          "kernel_size",    "context_channels", "postproc_channels",
        "residual_blocks", "temporal_radius", "hflip",          "vflip",
        "time_reverse",  "kernel_softmax", "mask_sigmoid",     "seed",
        "steps",         "lr",             "pattern",          "shift",
        "size"};
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw memc::IoError("config: unknown key '" + it.key() + "'");
        }
    }
    memc::PipelineConfig cfg;
    try {
        if (doc.contains("mode")) cfg.mode = memc::pipeline_mode_from_string(doc.at("mode"));
        if (doc.contains("kernel_size")) cfg.kernel_size = doc.at("kernel_size").get<int>();
        if (doc.contains("context_channels"))
            cfg.context_channels = doc.at("context_channels").get<int>();
        if (doc.contains("postproc_channels"))
            cfg.postproc_channels = doc.at("postproc_channels").get<int>();
        if (doc.contains("residual_blocks"))
            cfg.residual_blocks = doc.at("residual_blocks").get<int>();
        if (doc.contains("temporal_radius"))
            cfg.temporal_radius = doc.at("temporal_radius").get<int>();
        if (doc.contains("hflip")) cfg.aug_hflip = doc.at("hflip").get<bool>();
        if (doc.contains("vflip")) cfg.aug_vflip = doc.at("vflip").get<bool>();
        if (doc.contains("time_reverse"))
            cfg.aug_time_reverse = doc.at("time_reverse").get<bool>();
        if (doc.contains("kernel_softmax"))
            cfg.kernel_softmax = doc.at("kernel_softmax").get<bool>();
        if (doc.contains("mask_sigmoid")) cfg.mask_sigmoid = doc.at("mask_sigmoid").get<bool>();
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("steps")) *steps = doc.at("steps").get<int>();
        if (doc.contains("lr")) *lr = doc.at("lr").get<double>();
        if (doc.contains("pattern")) *pattern = doc.at("pattern").get<std::string>();
        if (doc.contains("shift")) {
            const auto& s = doc.at("shift");
            if (!s.is_array() || s.size() != 2) {
                throw memc::IoError("config: 'shift' must be [dx, dy]");
            }
            *shift_x = s[0].get<int>();
            *shift_y = s[1].get<int>();
        }
        if (doc.contains("size")) *size = doc.at("size").get<int>();
    } catch (const json::exception& e) {
        throw memc::IoError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

int cmd_train_toy(const std::string& config_path, const std::string& model_path,
                  const std::string& report_path) {
    json doc;
    {
        std::ifstream in(config_path);
        if (!in) {
            throw memc::IoError("cannot open config '" + config_path + "'");
        }
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw memc::IoError(std::string("config: ") + e.what());
        }
    }
    if (!doc.is_object()) {
        throw memc::IoError("config: top-level JSON object required");
    }
    int steps = 500;
    double lr = 1e-3;
    std::string pattern = "checker";
    int shift_x = 2, shift_y = 0, size = 16;
    const memc::PipelineConfig cfg =
        parse_pipeline_config(doc, &steps, &lr, &pattern, &shift_x, &shift_y, &size);

    memc::Pipeline pipeline(cfg);
    std::cerr << "training " << memc::to_string(cfg.mode) << " pipeline ("
              << pipeline.parameter_count() << " parameters, " << steps << " steps, lr " << lr
              << ")\n";

    memc::TrainReport report;
    const memc::SyntheticPattern pat = memc::pattern_from_string(pattern);
    if (cfg.is_enhance()) {
        const int count = 2 * cfg.temporal_radius + 1;
        const std::vector<memc::Tensor> clean =
            memc::make_synthetic_sequence(pat, {shift_x, shift_y}, size, count, cfg.seed);
        const std::vector<memc::Tensor> degraded =
            memc::degrade_sequence(clean, cfg.mode, cfg.seed + 1);
        report = memc::train_toy_enhance(pipeline, degraded, clean[cfg.temporal_radius],
                                         steps, lr);
    } else {
        const memc::Triplet triplet =
            memc::make_synthetic_triplet(pat, {shift_x, shift_y}, size, cfg.seed);
        report = memc::train_toy(pipeline, triplet, steps, lr);
    }
    memc::save_pipeline(model_path, pipeline);

    if (!report_path.empty()) {
        json rep;
        rep["losses"] = report.losses;
        rep["final_loss"] = report.losses.empty() ? 0.0 : report.losses.back();
        const std::string text = rep.dump(2) + "\n";
        memc::write_file_atomic(report_path,
                                std::vector<std::uint8_t>(text.begin(), text.end()));
    }
    if (!report.losses.empty()) {
        std::cerr << "loss " << report.losses.front() << " -> " << report.losses.back()
                  << "\n";
    }
    return kExitOk;
}

json metric_json(const memc::MetricReport& report) {
    json out;
    if (std::isinf(report.psnr)) {
        out["psnr"] = "inf";
    } else {
        out["psnr"] = report.psnr;
    }
    out["ssim"] = report.ssim;
    out["ie"] = report.ie;
    return out;
}

int cmd_metrics(const std::string& a_path, const std::string& b_path) {
    const memc::Tensor a = memc::read_image(a_path);
    const memc::Tensor b = memc::read_image(b_path);
    const memc::MetricReport report = memc::compare_images(a, b);
    std::cout << metric_json(report).dump() << "\n";
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    const memc::GradCheckReport report = memc::run_gradcheck(seed);
    json out;
    out["seed"] = seed;
    out["pass"] = report.pass;
    json layers = json::object();
    for (const memc::GradCheckSuite& suite : report.suites) {
        layers[suite.name] = {{"max_rel_err", suite.max_rel_err},
                              {"threshold", suite.threshold},
                              {"pass", suite.pass}};
    }
    out["layers"] = layers;
    std::cout << out.dump(2) << "\n";
    return report.pass ? kExitOk : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-compensated frame interpolation and enhancement toolkit"};
    app.require_subcommand(1);

    int threads = 1;
    app.add_option("--threads", threads, "worker threads for bit-identical parallel paths");

    std::string image_path, flow_path, kernels_path, out_path, holes_path;
    auto* warp = app.add_subcommand("warp", "warp an image by a flow field");
    warp->add_option("--image", image_path)->required();
    warp->add_option("--flow", flow_path)->required();
    warp->add_option("--kernels", kernels_path);
    warp->add_option("--out", out_path)->required();

    std::string pf_flow, pf_out;
    auto* project = app.add_subcommand("project-flow", "project flow to the middle frame");
    project->add_option("--flow", pf_flow)->required();
    project->add_option("--out", pf_out)->required();
    project->add_option("--dump-holes", holes_path);

    std::string prev_path, next_path, model_path, interp_out, mode_override;
    auto* interp = app.add_subcommand("interpolate", "synthesize the middle frame");
    interp->add_option("--prev", prev_path)->required();
    interp->add_option("--next", next_path)->required();
    interp->add_option("--out", interp_out)->required();
    interp->add_option("--model", model_path)->required();
    interp->add_option("--mode", mode_override)
        ->check(CLI::IsMember({"joint", "sequential"}));

    std::string config_path, train_model, report_path;
    auto* train = app.add_subcommand("train-toy", "overfit a pipeline on synthetic data");
    train->add_option("--config", config_path)->required();
    train->add_option("--out-model", train_model)->required();
    train->add_option("--report", report_path);

    std::string task, enh_model, enh_out;
    std::vector<std::string> frame_paths;
    auto* enh = app.add_subcommand("enhance", "restore the center frame of a window");
    enh->add_option("--task", task)->required()->check(CLI::IsMember({"sr", "dn", "db"}));
    enh->add_option("--frames", frame_paths)->required()->expected(-1);
    enh->add_option("--out", enh_out)->required();
    enh->add_option("--model", enh_model)->required();

    std::uint64_t seed = 7;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    gradcheck->add_option("--seed", seed);

    std::string metrics_a, metrics_b;
    auto* metrics = app.add_subcommand("metrics", "PSNR/SSIM/IE between two images");
    metrics->add_option("--a", metrics_a)->required();
    metrics->add_option("--b", metrics_b)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    }

    memc::set_num_threads(threads);
    try {
        if (app.got_subcommand(warp)) {
            return cmd_warp(image_path, flow_path, kernels_path, out_path);
        }
        if (app.got_subcommand(project)) {
            return cmd_project_flow(pf_flow, pf_out, holes_path);
        }
        if (app.got_subcommand(interp)) {
            return cmd_interpolate(prev_path, next_path, model_path, interp_out,
                                   mode_override);
        }
        if (app.got_subcommand(train)) {
            return cmd_train_toy(config_path, train_model, report_path);
        }
        if (app.got_subcommand(enh)) {
            return cmd_enhance(task, frame_paths, enh_model, enh_out);
        }
        if (app.got_subcommand(gradcheck)) {
            return cmd_gradcheck(seed);
        }
        if (app.got_subcommand(metrics)) {
            return cmd_metrics(metrics_a, metrics_b);
        }
    } catch (const memc::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const memc::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const memc::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const memc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
