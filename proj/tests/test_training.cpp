#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pcic/training.hpp"

using namespace pcic;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.ctx.c_channels = 3;
    cfg.ctx.c_hyper_channels = 4;
    cfg.ctx.pip_width = 3;
    cfg.codec.n_channels = 4;
    cfg.codec.m_channels = 4;
    cfg.codec.hyper_channels = 4;
    cfg.init_seed = 33;
    return cfg;
}

std::vector<TrainingFrame> synthetic_frames(int count, int h, int w, Rng& rng) {
    std::vector<TrainingFrame> frames;
    for (int f = 0; f < count; ++f) {
        TrainingFrame fr;
        fr.scene_id = "s";
        fr.frame_id = std::to_string(f);
        fr.image = Tensor({3, h, w});
        for (std::size_t i = 0; i < fr.image.numel(); ++i) fr.image[i] = rng.uniform();
        fr.depth.h = h;
        fr.depth.w = w;
        fr.depth.values.resize(static_cast<std::size_t>(h) * w, 0);
        fr.depth.occupancy.resize(fr.depth.values.size(), 0);
        for (std::size_t i = 0; i < fr.depth.values.size(); ++i)
            if (rng.bernoulli(0.15)) {
                fr.depth.values[i] = static_cast<std::uint8_t>(1 + rng.uniform_index(255));
                fr.depth.occupancy[i] = 1;
            }
        frames.push_back(std::move(fr));
    }
    return frames;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag) {
        path = fs::temp_directory_path() / tag;
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("alpha schedule reproduces the published breakpoints") {
    TrainConfig cfg;
    cfg.total_steps = 1000000;  // published scale
    CHECK(alpha_at(0, cfg) == 0.01);
    CHECK(alpha_at(499999, cfg) == 0.01);
    CHECK(alpha_at(500000, cfg) == 0.005);
    CHECK(alpha_at(600000, cfg) == 0.005);
    CHECK(alpha_at(899999, cfg) == 0.005);
    CHECK(alpha_at(900000, cfg) == 0.0);
    CHECK(alpha_at(950000, cfg) == 0.0);

    cfg.total_steps = 1000;  // breakpoints scale proportionally
    CHECK(alpha_at(499, cfg) == 0.01);
    CHECK(alpha_at(500, cfg) == 0.005);
    CHECK(alpha_at(899, cfg) == 0.005);
    CHECK(alpha_at(900, cfg) == 0.0);

    TrainConfig bad;
    bad.alpha_schedule = {{0.9, 0.01}, {0.5, 0.005}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("make_patch_batch aligns windows and is seed-deterministic") {
    Rng rng(60);
    auto frames = synthetic_frames(3, 320, 384, rng);

    Rng draw1(77), draw2(77);
    auto b1 = make_patch_batch(frames, 8, 256, draw1);
    auto b2 = make_patch_batch(frames, 8, 256, draw2);
    REQUIRE(b1.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(b1[i].image.shape() == std::vector<int>{3, 256, 256});
        CHECK(b1[i].depth01.shape() == std::vector<int>{1, 256, 256});
        CHECK(b1[i].frame_index == b2[i].frame_index);
        CHECK(b1[i].row == b2[i].row);
        CHECK(b1[i].col == b2[i].col);
        CHECK(max_abs_diff(b1[i].image, b2[i].image) == 0.0);

        // window on the depth equals the stored map crop
        const TrainingFrame& f = frames[static_cast<std::size_t>(b1[i].frame_index)];
        for (int r = 0; r < 256; r += 37)
            for (int c = 0; c < 256; c += 41)
                CHECK(b1[i].depth01.at(0, r, c) ==
                      f.depth.at(b1[i].row + r, b1[i].col + c) / 255.0);
    }

    // undersized frames are skipped, not fatal, as long as one frame fits
    auto small = synthetic_frames(1, 64, 64, rng);
    small.push_back(frames[0]);
    long long skipped = 0;
    Rng draw3(5);
    auto b3 = make_patch_batch(small, 4, 256, draw3, &skipped);
    CHECK(b3.size() == 4);
    for (const auto& s : b3) CHECK(s.frame_index == 1);

    CHECK_THROWS_AS(make_patch_batch(synthetic_frames(2, 64, 64, rng), 2, 256, draw3),
                    ConfigError);
}

TEST_CASE("training smoke: deterministic, resumable, loss components consistent") {
    Rng rng(61);
    auto frames = synthetic_frames(2, 128, 128, rng);

    TrainConfig tc;
    tc.lambda = 0.016;
    tc.total_steps = 6;
    tc.batch_size = 2;
    tc.patch = 64;
    tc.seed = 9;
    tc.checkpoint_every = 3;

    // component sum identity at a fixed state
    {
        Model model(tiny_model_config());
        auto r = total_loss(model, frames[0].image, depth_to_tensor(frames[0].depth), 0, tc);
        const auto& c = r.components;
        CHECK(r.loss->value[0] ==
              doctest::Approx(c.rate_y_bpp + c.rate_z_bpp + tc.lambda * c.mse + c.alpha * c.lpre)
                  .epsilon(1e-12));
    }

    TempDir run1("pcic_train_run1");
    TempDir run2("pcic_train_run2");
    TempDir run3("pcic_train_run3");

    Model m1(tiny_model_config());
    AdamState s1;
    TrainSummary sum1 = train(m1, s1, tc, frames, run1.path);
    REQUIRE(sum1.steps_run == 6);
    for (const auto& step : sum1.per_step) {
        CHECK(std::isfinite(step.total));
        CHECK(step.rate_y_bpp >= 0.0);
        CHECK(step.rate_z_bpp >= 0.0);
        CHECK(step.mse >= 0.0);
        CHECK(step.lpre >= 0.0);
    }

    // identical rerun
    Model m2(tiny_model_config());
    AdamState s2;
    TrainSummary sum2 = train(m2, s2, tc, frames, run2.path);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(sum1.per_step[i].total == sum2.per_step[i].total);
    for (const auto& [name, t] : m1.params.all())
        CHECK(max_abs_diff(t, m2.params.at(name)) == 0.0);

    // resume from the step-3 checkpoint: steps 4..6 bit-identical
    const fs::path mid = run1.path / checkpoint_name("hyper_pc", 0.016, 3);
    REQUIRE(fs::exists(mid));
    ResumedTraining resumed = load_train_checkpoint(mid);
    CHECK(resumed.step == 3);
    TrainSummary sum3 = train(resumed.model, resumed.opt_state, resumed.config, frames,
                              run3.path, resumed.step);
    REQUIRE(sum3.steps_run == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(sum3.per_step[i].total == sum1.per_step[3 + i].total);
    for (const auto& [name, t] : resumed.model.params.all())
        CHECK(max_abs_diff(t, m1.params.at(name)) == 0.0);

    // metrics log exists with one line per step
    std::ifstream metrics(run1.path / "metrics.jsonl");
    int lines = 0;
    std::string line;
    while (std::getline(metrics, line)) ++lines;
    CHECK(lines == 6);

    // validation loss runs and is finite
    const double v = validation_loss(m1, frames, tc, 6);
    CHECK(std::isfinite(v));
}

TEST_CASE("ablation configs build and run one step") {
    Rng rng(62);
    auto frames = synthetic_frames(1, 64, 64, rng);
    TrainConfig tc;
    tc.lambda = 0.016;
    tc.total_steps = 1;
    tc.batch_size = 1;
    tc.patch = 64;
    for (Ablation ab :
         {Ablation::full, Ablation::no_pip, Ablation::no_fg, Ablation::no_ff,
          Ablation::encoder_only, Ablation::decoder_only, Ablation::zeros_input}) {
        ModelConfig mc = tiny_model_config();
        mc.ablation = ab;
        tc.ablation = ab;
        Model model(mc);
        auto r = total_loss(model, frames[0].image, depth_to_tensor(frames[0].depth), 0, tc);
        CHECK(std::isfinite(r.components.total));
        auto grads = ag::backward(r.loss);
        CHECK(!grads.empty());
    }
}
