#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "pcic/config.hpp"
#include "pcic/evaluation.hpp"
#include "pcic/fixture.hpp"
#include "pcic/image_io.hpp"
#include "pcic/training.hpp"

namespace fs = std::filesystem;
using namespace pcic;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_override;
};

GlobalConfig load_config(CommonArgs& args) {
    if (args.config_path.empty()) throw ConfigError("--config is required for this command");
    GlobalConfig g = load_global_config(args.config_path);
    if (args.seed_set) g.seed = args.seed;
    if (!args.out_override.empty()) g.out_dir = args.out_override;
    return g;
}

Rect effective_roi(const GlobalConfig& g, const Tensor& image) {
    if (g.dataset.roi.w > 0 && g.dataset.roi.h > 0) return g.dataset.roi;
    return Rect{0, 0, image.dim(2), image.dim(1)};
}

std::map<std::string, DatasetManifest> build_all_manifests(const GlobalConfig& g) {
    return build_manifest(g.dataset.root, g.dataset.splits, g.dataset.roi, g.dataset.camera);
}

int cmd_fixture(const std::string& out, const FixtureConfig& cfg) {
    generate_fixture(out, cfg);
    std::printf("fixture: %d scenes x %d frames at %dx%d under %s\n", cfg.scenes,
                cfg.frames_per_scene, cfg.width, cfg.height, out.c_str());
    return 0;
}

int cmd_project(CommonArgs& common) {
    GlobalConfig g = load_config(common);
    auto manifests = build_all_manifests(g);
    const fs::path proj_dir = g.out_dir / "proj";
    const fs::path manifest_dir = g.out_dir / "manifests";
    fs::create_directories(proj_dir);
    fs::create_directories(manifest_dir);
    int frames = 0;
    for (auto& [split, manifest] : manifests) {
        for (const auto& rec : manifest.records) {
            ScenePair pair = load_scene_pair(rec, g.dataset.camera);
            const Rect roi = effective_roi(g, pair.image);
            ProjectionConfig pc{g.projection_s, pair.image.dim(2), pair.image.dim(1)};
            SparseDepthMap sparse = project_scan(pair.scan, pair.calib, pc);
            SparseDepthMap cropped = crop_sparse(sparse, roi.x, roi.y, roi.w, roi.h);
            EqualizedDepthMap eq = normalize_equalize(cropped, pc);
            write_pgm(proj_dir / (rec.scene_id + "_" + rec.frame_id + ".pgm"), eq);
            ++frames;
        }
        DatasetManifest fixed = manifest;
        if (!fixed.records.empty() && (fixed.roi.w == 0 || fixed.roi.h == 0)) {
            ScenePair first = load_scene_pair(fixed.records.front(), g.dataset.camera);
            fixed.roi = effective_roi(g, first.image);
        }
        write_manifest(manifest_dir / (split + ".json"), fixed);
    }
    std::printf("project: wrote %d equalized depth maps to %s\n", frames, proj_dir.c_str());
    return 0;
}

int cmd_train(CommonArgs& common, int lambda_index, const std::string& ablation) {
    GlobalConfig g = load_config(common);
    if (!ablation.empty()) g.train.ablation = ablation_from_string(ablation);
    DatasetManifest train_manifest = read_manifest(g.out_dir / "manifests" / "train.json");
    auto frames = load_training_frames(train_manifest, g.out_dir / "proj");

    std::vector<int> indices;
    if (lambda_index >= 0)
        indices.push_back(lambda_index);
    else
        for (std::size_t i = 0; i < g.train.lambdas.size(); ++i)
            indices.push_back(static_cast<int>(i));

    for (int idx : indices) {
        ModelConfig mc = make_model_config(g, idx);
        TrainConfig tc = make_train_config(g, mc.lambda);
        Model model(mc);
        AdamState opt;
        const fs::path run_dir = g.out_dir / "train" /
                                 (mc.name + "_" + to_string(mc.ablation) + "_l" +
                                  std::to_string(idx));
        std::printf("train: %s lambda=%g ablation=%s steps=%lld\n", mc.name.c_str(), mc.lambda,
                    to_string(mc.ablation).c_str(), tc.total_steps);
        TrainSummary summary = train(model, opt, tc, frames, run_dir);
        std::printf("train: final checkpoint %s\n", summary.final_checkpoint.c_str());
    }
    return 0;
}

int cmd_compress(const std::string& checkpoint, const std::string& image_path,
                 const std::string& depth_path, bool zeros, const std::string& out_path,
                 const std::string& recon_path) {
    Model model = Model::load(checkpoint);
    Tensor image = read_png_rgb(image_path);
    EqualizedDepthMap depth;
    const EqualizedDepthMap* depth_ptr = nullptr;
    if (!depth_path.empty()) {
        depth = read_pgm(depth_path);
        depth_ptr = &depth;
    }
    auto res = model.compress(image, depth_ptr, zeros);
    write_bitstream_file(out_path, res.stream);
    if (!recon_path.empty()) write_png_rgb(recon_path, res.reconstruction);
    const double rate = bpp(res.stream, image.dim(1), image.dim(2));
    std::printf("compress: %zu bytes (%.4f bpp), estimated y %.0f bits, z %.0f bits\n",
                res.stream.total_bytes(), rate, res.est_bits_y, res.est_bits_z);
    return 0;
}

int cmd_decompress(const std::string& checkpoint, const std::string& stream_path,
                   const std::string& depth_path, const std::string& out_path) {
    Model model = Model::load(checkpoint);
    Bitstream stream = read_bitstream_file(stream_path);
    EqualizedDepthMap depth;
    const EqualizedDepthMap* depth_ptr = nullptr;
    if (!depth_path.empty()) {
        depth = read_pgm(depth_path);
        depth_ptr = &depth;
    }
    Tensor recon = model.decompress(stream, depth_ptr);
    write_png_rgb(out_path, recon);
    std::printf("decompress: %dx%d frame to %s\n", stream.header.orig_w, stream.header.orig_h,
                out_path.c_str());
    return 0;
}

int cmd_eval(CommonArgs& common, const std::vector<std::string>& checkpoints,
             const std::string& label, double degrade_voxel, bool zeros,
             const std::string& out_path) {
    GlobalConfig g = load_config(common);
    DatasetManifest manifest = read_manifest(g.out_dir / "manifests" / (g.eval.split + ".json"));
    EvalOptions opts;
    opts.projection_s = g.projection_s;
    opts.degrade_voxel = degrade_voxel > 0.0 ? degrade_voxel : g.eval.degrade_voxel;
    opts.zeros = zeros || g.eval.zeros;

    RdCurve curve;
    curve.label = label;
    const fs::path records_dir = g.out_dir / "eval";
    fs::create_directories(records_dir);
    std::vector<RdPoint> points;
    for (const auto& ck : checkpoints) {
        Model model = Model::load(ck);
        EvalResult result = evaluate_model(model, manifest, opts);
        points.push_back(result.point);
        const std::string mode = to_string(model.cfg.ablation) +
                                 (opts.zeros ? "+zeros" : "") +
                                 (opts.degrade_voxel > 0 ? "+degraded" : "");
        write_frame_records(records_dir / (label + "_l" +
                                           std::to_string(model.cfg.codec.lambda_index) +
                                           "_frames.jsonl"),
                            result, mode);
        std::printf("eval: %s lambda_index=%d -> %.4f bpp, %.2f dB\n", ck.c_str(),
                    model.cfg.codec.lambda_index, result.point.bpp, result.point.psnr);
    }
    std::sort(points.begin(), points.end(),
              [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
    curve.points = points;
    curve.validate();  // strictly increasing bpp (and PSNR) or error
    write_curve(out_path, curve);
    std::printf("eval: wrote curve '%s' (%zu points) to %s\n", label.c_str(),
                curve.points.size(), out_path.c_str());
    return 0;
}

int cmd_bdrate(const std::string& test_path, const std::string& anchor_path) {
    RdCurve test = read_curve(test_path);
    RdCurve anchor = read_curve(anchor_path);
    std::printf("BD-Rate(%s vs %s) = %.2f%%\n", test.label.c_str(), anchor.label.c_str(),
                bd_rate(test, anchor));
    return 0;
}

int cmd_report(const std::vector<std::string>& curve_paths, const std::string& anchor,
               const std::string& out_dir) {
    std::vector<RdCurve> curves;
    for (const auto& p : curve_paths) curves.push_back(read_curve(p));
    emit_report(curves, anchor.empty() ? curves.front().label : anchor, out_dir);
    std::printf("report: wrote bd_rate.csv and rd_curves.svg to %s\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-cloud assisted learned image compression toolkit"};
    app.require_subcommand(1);

    CommonArgs common;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "Global JSON config")
            ->envname("PCIC_CONFIG");
        cmd->add_option("--seed", common.seed, "Override the global seed")
            ->envname("PCIC_SEED")
            ->each([&](const std::string&) { common.seed_set = true; });
        cmd->add_option("--out", common.out_override, "Override the output directory")
            ->envname("PCIC_OUT");
    };

    // fixture
    FixtureConfig fixture_cfg;
    std::string fixture_out = "data/fixture";
    auto* fixture_cmd = app.add_subcommand("fixture", "Generate the synthetic scene fixture");
    fixture_cmd->add_option("--out", fixture_out, "Output directory");
    fixture_cmd->add_option("--scenes", fixture_cfg.scenes, "Scene count");
    fixture_cmd->add_option("--frames", fixture_cfg.frames_per_scene, "Frames per scene");
    fixture_cmd->add_option("--width", fixture_cfg.width, "Image width");
    fixture_cmd->add_option("--height", fixture_cfg.height, "Image height");
    fixture_cmd->add_option("--seed", fixture_cfg.seed, "Generator seed")->envname("PCIC_SEED");

    auto* project_cmd =
        app.add_subcommand("project", "Materialize equalized depth maps for every split");
    add_common(project_cmd);

    int lambda_index = -1;
    std::string ablation_override;
    auto* train_cmd = app.add_subcommand("train", "Run the rate-distortion training sweep");
    add_common(train_cmd);
    train_cmd->add_option("--lambda-index", lambda_index, "Train a single lambda (default: all)")
        ->envname("PCIC_LAMBDA_INDEX");
    train_cmd->add_option("--ablation", ablation_override,
                          "full|no_pip|no_fg|no_ff|encoder_only|decoder_only|zeros_input")
        ->envname("PCIC_ABLATION");

    std::string checkpoint, image_path, depth_path, stream_path, out_path, recon_path;
    bool zeros = false;
    auto* compress_cmd = app.add_subcommand("compress", "Compress a single frame");
    compress_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    compress_cmd->add_option("--image", image_path, "Input PNG")->required();
    compress_cmd->add_option("--depth", depth_path, "Equalized depth PGM");
    compress_cmd->add_flag("--zeros", zeros, "Feed an all-zero depth raster");
    compress_cmd->add_option("--out", out_path, "Output bitstream path")->required();
    compress_cmd->add_option("--recon", recon_path, "Also write the encoder-side recon PNG");

    auto* decompress_cmd = app.add_subcommand("decompress", "Decompress a bitstream");
    decompress_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    decompress_cmd->add_option("--stream", stream_path, "Input bitstream")->required();
    decompress_cmd->add_option("--depth", depth_path, "Equalized depth PGM");
    decompress_cmd->add_option("--out", out_path, "Output PNG")->required();

    std::vector<std::string> checkpoints, curve_paths;
    std::string label = "model", anchor;
    double degrade_voxel = 0.0;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints into an RD curve");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoints, "Checkpoint(s), one per lambda")
        ->required();
    eval_cmd->add_option("--label", label, "Curve label");
    eval_cmd->add_option("--degrade-voxel", degrade_voxel,
                         "Voxel edge (meters) for degraded-scan evaluation")
        ->envname("PCIC_DEGRADE_VOXEL");
    eval_cmd->add_flag("--zeros", zeros, "Evaluate with all-zero depth input");
    eval_cmd->add_option("--curve-out", out_path, "Output curve JSON")->required();

    auto* bdrate_cmd = app.add_subcommand("bdrate", "BD-Rate between two curve files");
    bdrate_cmd->add_option("test", stream_path, "Test curve JSON")->required();
    bdrate_cmd->add_option("anchor", image_path, "Anchor curve JSON")->required();

    std::string report_out = "report";
    auto* report_cmd = app.add_subcommand("report", "Render RD plot and BD-Rate table");
    report_cmd->add_option("curves", curve_paths, "Curve JSON files")->required();
    report_cmd->add_option("--anchor", anchor, "Anchor label (default: first curve)");
    report_cmd->add_option("--out", report_out, "Report directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fixture_cmd->parsed()) return cmd_fixture(fixture_out, fixture_cfg);
        if (project_cmd->parsed()) return cmd_project(common);
        if (train_cmd->parsed()) return cmd_train(common, lambda_index, ablation_override);
        if (compress_cmd->parsed())
            return cmd_compress(checkpoint, image_path, depth_path, zeros, out_path, recon_path);
        if (decompress_cmd->parsed())
            return cmd_decompress(checkpoint, stream_path, depth_path, out_path);
        if (eval_cmd->parsed())
            return cmd_eval(common, checkpoints, label, degrade_voxel, zeros, out_path);
        if (bdrate_cmd->parsed()) return cmd_bdrate(stream_path, image_path);
        if (report_cmd->parsed()) return cmd_report(curve_paths, anchor, report_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return 0;
}
