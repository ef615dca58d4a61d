#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "pcic/dataset.hpp"
#include "pcic/model.hpp"

namespace pcic {

struct AlphaSegment {
    double fraction = 0.0;  // segment active while step < fraction * total_steps
    double alpha = 0.0;
};

struct TrainConfig {
    double lambda = 0.016;
    long long total_steps = 500;
    std::vector<AlphaSegment> alpha_schedule{{0.5, 0.01}, {0.9, 0.005}};
    int batch_size = 8;
    int patch = 256;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double grad_clip = 1.0;
    std::uint64_t seed = 1;
    Ablation ablation = Ablation::full;
    long long checkpoint_every = 0;  // 0: final checkpoint only
    long long log_every = 1;

    void validate() const;
};

/// Piecewise-constant prediction-loss weight; the published breakpoints
/// (0.01 until 50% of steps, 0.005 until 90%, 0 after) scale with
/// total_steps.
double alpha_at(long long step, const TrainConfig& cfg);

/// One frame held in memory for patch sampling: ROI-cropped image plus its
/// stored equalized projection at the same size.
struct TrainingFrame {
    std::string scene_id, frame_id;
    Tensor image;             // {3,H,W}
    EqualizedDepthMap depth;  // H x W
};

/// Loads every manifest record with its stored projection from `depth_dir`
/// (files named <scene_id>_<frame_id>.pgm).
std::vector<TrainingFrame> load_training_frames(const DatasetManifest& manifest,
                                                const std::filesystem::path& depth_dir);

struct PatchSample {
    Tensor image;    // {3,patch,patch}
    Tensor depth01;  // {1,patch,patch}
    int frame_index = 0, row = 0, col = 0;
};

/// Draws `batch` aligned crops; identical windows on image and depth. Frames
/// smaller than the patch are skipped (counted in `skipped`); throws
/// ConfigError when no frame fits.
std::vector<PatchSample> make_patch_batch(const std::vector<TrainingFrame>& frames, int batch,
                                          int patch, Rng& rng, long long* skipped = nullptr);

/// The spec-level objective evaluated on one aligned pair at a given step:
/// identical to Model::train_loss with alpha taken from the schedule and
/// deterministic per-step noise/target draws.
Model::TrainResult total_loss(const Model& model, const Tensor& image, const Tensor& depth01,
                              long long step, const TrainConfig& cfg, int sample_index = 0);

struct TrainSummary {
    long long steps_run = 0;
    std::vector<LossComponents> per_step;  // batch-mean components
    std::filesystem::path final_checkpoint;
};

using StepCallback = std::function<void(long long step, const LossComponents&)>;

/// Runs the optimization loop with noise-mode quantization, emitting
/// line-delimited JSON metrics and periodic checkpoints named
/// {model}_{lambda}_{step}.pckpt. Resuming from a checkpoint reproduces the
/// uninterrupted trajectory bit-exactly (per-step randomness is derived
/// statelessly from the seed and step index). On divergence the last good
/// checkpoint stays on disk and DivergenceError propagates.
TrainSummary train(Model& model, AdamState& opt_state, const TrainConfig& cfg,
                   const std::vector<TrainingFrame>& frames, const std::filesystem::path& out_dir,
                   long long start_step = 0, const StepCallback& callback = nullptr);

/// Serializes model + optimizer + step for bit-identical resume.
void save_train_checkpoint(const std::filesystem::path& path, const Model& model,
                           const AdamState& opt_state, const TrainConfig& cfg, long long step);

struct ResumedTraining {
    Model model;
    AdamState opt_state;
    TrainConfig config;
    long long step = 0;
};
ResumedTraining load_train_checkpoint(const std::filesystem::path& path);

std::string checkpoint_name(const std::string& model_name, double lambda, long long step);

/// Mean validation loss (same objective, deterministic draws keyed by frame
/// index) over whole-frame evaluations.
double validation_loss(const Model& model, const std::vector<TrainingFrame>& frames,
                       const TrainConfig& cfg, long long step);

}  // namespace pcic
