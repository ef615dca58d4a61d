#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pcic/dataset.hpp"
#include "pcic/model.hpp"
#include "pcic/training.hpp"

namespace pcic {

/// Whole-run configuration; parsed from one JSON document, validated as a
/// whole (unknown keys rejected) before any command runs.
struct GlobalConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";

    struct Dataset {
        std::filesystem::path root;
        std::string camera = "02";
        std::map<std::string, std::string> splits;  // scene -> train/val/test
        Rect roi;                                   // w==0: full frame
    } dataset;

    double projection_s = 3.0;
    ContextNetConfig ctx;
    CodecConfig codec;  // lambda_index filled per sweep entry

    struct Train {
        std::vector<double> lambdas{0.004, 0.008, 0.016, 0.032};
        long long total_steps = 500;
        std::vector<AlphaSegment> alpha_schedule{{0.5, 0.01}, {0.9, 0.005}};
        int batch_size = 8;
        int patch = 256;
        double learning_rate = 1e-4;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double grad_clip = 1.0;
        Ablation ablation = Ablation::full;
        long long checkpoint_every = 0;
        long long log_every = 1;
    } train;

    struct Eval {
        double degrade_voxel = 0.0;
        bool zeros = false;
        std::string split = "test";
    } eval;

    std::string model_name = "hyper_pc";

    void validate() const;
};

GlobalConfig load_global_config(const std::filesystem::path& path);

TrainConfig make_train_config(const GlobalConfig& g, double lambda);
ModelConfig make_model_config(const GlobalConfig& g, int lambda_index);

}  // namespace pcic
