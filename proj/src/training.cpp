#include "pcic/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "pcic/checkpoint.hpp"
#include "pcic/image_io.hpp"

namespace pcic {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (lambda <= 0.0) throw ConfigError("train: lambda must be > 0");
    if (total_steps <= 0) throw ConfigError("train: total_steps must be > 0");
    if (batch_size <= 0) throw ConfigError("train: batch_size must be > 0");
    if (patch <= 0 || patch % 64 != 0)
        throw ConfigError("train: patch must be a positive multiple of 64");
    double prev = 0.0;
    for (const auto& seg : alpha_schedule) {
        if (seg.fraction <= prev)
            throw ConfigError("train: alpha schedule thresholds must be strictly increasing");
        prev = seg.fraction;
    }
}

double alpha_at(long long step, const TrainConfig& cfg) {
    if (step < 0) throw ConfigError("alpha_at: negative step");
    const double t = static_cast<double>(step);
    for (const auto& seg : cfg.alpha_schedule)
        if (t < seg.fraction * static_cast<double>(cfg.total_steps)) return seg.alpha;
    return 0.0;
}

std::vector<TrainingFrame> load_training_frames(const DatasetManifest& manifest,
                                                const fs::path& depth_dir) {
    std::vector<TrainingFrame> frames;
    for (const auto& rec : manifest.records) {
        TrainingFrame f;
        f.scene_id = rec.scene_id;
        f.frame_id = rec.frame_id;
        Tensor full = read_png_rgb(rec.image_path);
        const Rect roi = manifest.roi;
        ScenePair tmp;
        tmp.image = full;
        tmp.roi = Rect{0, 0, full.dim(2), full.dim(1)};
        f.image = crop_roi(tmp, roi).image;
        const fs::path depth_path = depth_dir / (rec.scene_id + "_" + rec.frame_id + ".pgm");
        f.depth = read_pgm(depth_path);
        if (f.depth.h != f.image.dim(1) || f.depth.w != f.image.dim(2))
            throw ShapeError("stored projection " + depth_path.string() +
                             " does not match the cropped image size");
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<PatchSample> make_patch_batch(const std::vector<TrainingFrame>& frames, int batch,
                                          int patch, Rng& rng, long long* skipped) {
    if (frames.empty()) throw ConfigError("make_patch_batch: no frames");
    bool any_fits = false;
    for (const auto& f : frames)
        if (f.image.dim(1) >= patch && f.image.dim(2) >= patch) any_fits = true;
    if (!any_fits) throw ConfigError("make_patch_batch: every frame is smaller than the patch");

    std::vector<PatchSample> out;
    while (static_cast<int>(out.size()) < batch) {
        const auto fi = static_cast<std::size_t>(rng.uniform_index(frames.size()));
        const TrainingFrame& f = frames[fi];
        const int h = f.image.dim(1), w = f.image.dim(2);
        if (h < patch || w < patch) {
            if (skipped) ++*skipped;
            continue;
        }
        const int r = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h - patch + 1)));
        const int c = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(w - patch + 1)));
        PatchSample s;
        s.frame_index = static_cast<int>(fi);
        s.row = r;
        s.col = c;
        s.image = Tensor({3, patch, patch});
        for (int ch = 0; ch < 3; ++ch)
            for (int i = 0; i < patch; ++i)
                for (int j = 0; j < patch; ++j)
                    s.image.at(ch, i, j) = f.image.at(ch, r + i, c + j);
        s.depth01 = Tensor({1, patch, patch});
        for (int i = 0; i < patch; ++i)
            for (int j = 0; j < patch; ++j)
                s.depth01.at(0, i, j) = f.depth.at(r + i, c + j) / 255.0;
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

// Distinct stateless randomness lanes per (seed, step).
constexpr std::uint64_t kBatchLane = 0x10;
constexpr std::uint64_t kNoiseLane = 0x20;
constexpr std::uint64_t kTargetLane = 0x30;

Rng sample_noise_rng(std::uint64_t seed, long long step, int sample) {
    return derive_rng(seed + kNoiseLane,
                      static_cast<std::uint64_t>(step) * 4096 + static_cast<std::uint64_t>(sample));
}

std::uint64_t sample_target_seed(std::uint64_t seed, long long step, int sample) {
    return derive_rng(seed + kTargetLane,
                      static_cast<std::uint64_t>(step) * 4096 + static_cast<std::uint64_t>(sample))
        .next_u64();
}

}  // namespace

Model::TrainResult total_loss(const Model& model, const Tensor& image, const Tensor& depth01,
                              long long step, const TrainConfig& cfg, int sample_index) {
    Rng noise = sample_noise_rng(cfg.seed, step, sample_index);
    return model.train_loss(image, depth01, alpha_at(step, cfg), noise,
                            sample_target_seed(cfg.seed, step, sample_index));
}

std::string checkpoint_name(const std::string& model_name, double lambda, long long step) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", lambda);
    return model_name + "_" + buf + "_" + std::to_string(step) + ".pckpt";
}

void save_train_checkpoint(const fs::path& path, const Model& model, const AdamState& opt_state,
                           const TrainConfig& cfg, long long step) {
    CheckpointData data;
    data.meta["model_config"] = model_config_to_json(model.cfg);
    data.meta["step"] = step;
    data.meta["adam_t"] = opt_state.t;
    data.meta["train_config"] = json{{"lambda", cfg.lambda},
                                     {"total_steps", cfg.total_steps},
                                     {"batch_size", cfg.batch_size},
                                     {"patch", cfg.patch},
                                     {"learning_rate", cfg.learning_rate},
                                     {"adam_beta1", cfg.adam_beta1},
                                     {"adam_beta2", cfg.adam_beta2},
                                     {"grad_clip", cfg.grad_clip},
                                     {"seed", cfg.seed},
                                     {"ablation", to_string(cfg.ablation)}};
    json sched = json::array();
    for (const auto& seg : cfg.alpha_schedule)
        sched.push_back({{"fraction", seg.fraction}, {"alpha", seg.alpha}});
    data.meta["train_config"]["alpha_schedule"] = sched;
    data.arrays = model.params.all();
    for (const auto& [name, t] : opt_state.m) data.arrays.emplace("optim.m." + name, t);
    for (const auto& [name, t] : opt_state.v) data.arrays.emplace("optim.v." + name, t);
    write_checkpoint(path, data);
}

ResumedTraining load_train_checkpoint(const fs::path& path) {
    CheckpointData data = read_checkpoint(path);
    ResumedTraining out{Model(model_config_from_json(data.meta.at("model_config"))), AdamState{},
                        TrainConfig{}, data.meta.value("step", 0LL)};
    out.opt_state.t = data.meta.value("adam_t", 0LL);
    if (data.meta.contains("train_config")) {
        const auto& t = data.meta.at("train_config");
        out.config.lambda = t.value("lambda", out.config.lambda);
        out.config.total_steps = t.value("total_steps", out.config.total_steps);
        out.config.batch_size = t.value("batch_size", out.config.batch_size);
        out.config.patch = t.value("patch", out.config.patch);
        out.config.learning_rate = t.value("learning_rate", out.config.learning_rate);
        out.config.adam_beta1 = t.value("adam_beta1", out.config.adam_beta1);
        out.config.adam_beta2 = t.value("adam_beta2", out.config.adam_beta2);
        out.config.grad_clip = t.value("grad_clip", out.config.grad_clip);
        out.config.seed = t.value("seed", out.config.seed);
        out.config.ablation = ablation_from_string(t.value("ablation", "full"));
        if (t.contains("alpha_schedule")) {
            out.config.alpha_schedule.clear();
            for (const auto& seg : t.at("alpha_schedule"))
                out.config.alpha_schedule.push_back(
                    {seg.at("fraction").get<double>(), seg.at("alpha").get<double>()});
        }
    }
    for (auto& [name, tensor] : out.model.params.all()) {
        auto it = data.arrays.find(name);
        if (it == data.arrays.end()) throw IoError("checkpoint missing parameter '" + name + "'");
        tensor = it->second;
        auto mit = data.arrays.find("optim.m." + name);
        auto vit = data.arrays.find("optim.v." + name);
        if (mit != data.arrays.end()) out.opt_state.m[name] = mit->second;
        if (vit != data.arrays.end()) out.opt_state.v[name] = vit->second;
    }
    return out;
}

TrainSummary train(Model& model, AdamState& opt_state, const TrainConfig& cfg,
                   const std::vector<TrainingFrame>& frames, const fs::path& out_dir,
                   long long start_step, const StepCallback& callback) {
    cfg.validate();
    fs::create_directories(out_dir);
    std::ofstream metrics(out_dir / "metrics.jsonl", start_step > 0 ? std::ios::app : std::ios::out);

    AdamConfig adam;
    adam.lr = cfg.learning_rate;
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    adam.clip_norm = cfg.grad_clip;

    TrainSummary summary;
    fs::path last_checkpoint;
    long long skipped = 0;

    for (long long step = start_step; step < cfg.total_steps; ++step) {
        Rng batch_rng = derive_rng(cfg.seed + kBatchLane, static_cast<std::uint64_t>(step));
        std::vector<PatchSample> batch =
            make_patch_batch(frames, cfg.batch_size, cfg.patch, batch_rng, &skipped);

        ag::GradMap accum;
        LossComponents mean;
        try {
            for (int i = 0; i < cfg.batch_size; ++i) {
                const PatchSample& s = batch[static_cast<std::size_t>(i)];
                Model::TrainResult r = total_loss(model, s.image, s.depth01, step, cfg, i);
                ag::GradMap g = ag::backward(r.loss);
                accumulate_grads(accum, g);
                mean.total += r.components.total;
                mean.rate_y_bpp += r.components.rate_y_bpp;
                mean.rate_z_bpp += r.components.rate_z_bpp;
                mean.mse += r.components.mse;
                mean.lpre += r.components.lpre;
                mean.alpha = r.components.alpha;
            }
        } catch (const DivergenceError&) {
            // Leave the last good checkpoint in place and report upward.
            throw;
        }
        const double inv_b = 1.0 / cfg.batch_size;
        mean.total *= inv_b;
        mean.rate_y_bpp *= inv_b;
        mean.rate_z_bpp *= inv_b;
        mean.mse *= inv_b;
        mean.lpre *= inv_b;
        scale_grads(accum, inv_b);
        adam_step(model.params, accum, opt_state, adam);

        if (cfg.log_every > 0 && step % cfg.log_every == 0) {
            metrics << json{{"step", step},
                            {"L", mean.total},
                            {"R_y", mean.rate_y_bpp},
                            {"R_z", mean.rate_z_bpp},
                            {"MSE", mean.mse},
                            {"L_pre", mean.lpre},
                            {"alpha", mean.alpha}}
                            .dump()
                    << "\n";
        }
        summary.per_step.push_back(mean);
        ++summary.steps_run;
        if (callback) callback(step, mean);

        const bool periodic = cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0;
        if (periodic || step + 1 == cfg.total_steps) {
            last_checkpoint =
                out_dir / checkpoint_name(model.cfg.name, cfg.lambda, step + 1);
            save_train_checkpoint(last_checkpoint, model, opt_state, cfg, step + 1);
        }
    }
    if (skipped > 0)
        std::fprintf(stderr, "[train] skipped %lld undersized frame draws\n", skipped);
    summary.final_checkpoint = last_checkpoint;
    return summary;
}

double validation_loss(const Model& model, const std::vector<TrainingFrame>& frames,
                       const TrainConfig& cfg, long long step) {
    if (frames.empty()) throw ConfigError("validation_loss: no frames");
    double acc = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const TrainingFrame& f = frames[i];
        const int ph = f.image.dim(1) / 64 * 64, pw = f.image.dim(2) / 64 * 64;
        if (ph == 0 || pw == 0) continue;
        Tensor img = crop_top_left(f.image, ph, pw);
        Tensor d01 = crop_top_left(depth_to_tensor(f.depth), ph, pw);
        Model::TrainResult r =
            total_loss(model, img, d01, step, cfg, static_cast<int>(i % 4096));
        acc += r.components.total;
        ++count;
    }
    if (count == 0) throw ConfigError("validation_loss: no usable frames");
    return acc / count;
}

}  // namespace pcic
