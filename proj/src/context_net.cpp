#include "pcic/context_net.hpp"

#include <algorithm>
#include <cmath>

namespace pcic {

using namespace ag;

Pip::Pip(ParamStore& s, Rng& rng, const std::string& p, const ContextNetConfig& cfg)
    : conv_in_(s, rng, p + ".conv_in", 1, cfg.pip_width, 3, 1, 1),
      conv_out_(s, rng, p + ".conv_out", cfg.pip_width, 3, 3, 1, 1),
      rb1_(s, rng, p + ".rb1", cfg.pip_width),
      rb2_(s, rng, p + ".rb2", cfg.pip_width),
      att_(s, rng, p + ".att", cfg.pip_width) {}

Var Pip::forward(const Var& depth01) const {
    return sigmoid(conv_out_.forward(rb2_.forward(att_.forward(rb1_.forward(conv_in_.forward(depth01))))));
}

FeatureGeneration::FeatureGeneration(ParamStore& s, Rng& rng, const std::string& p,
                                     int in_channels, const ContextNetConfig& cfg)
    : el1_conv_(s, rng, p + ".el1.conv", in_channels, cfg.c_channels, 3, 1, 1),
      el2_conv_(s, rng, p + ".el2.conv", cfg.c_channels, cfg.c_channels, 3, 2, 1),
      el3_conv_(s, rng, p + ".el3.conv", cfg.c_channels, cfg.c_channels, 3, 2, 1),
      el1_rb_(s, rng, p + ".el1.rb", cfg.c_channels),
      el2_rb_(s, rng, p + ".el2.rb", cfg.c_channels),
      el3_rb_(s, rng, p + ".el3.rb", cfg.c_channels),
      el1_att_(s, rng, p + ".el1.att", cfg.c_channels),
      el2_att_(s, rng, p + ".el2.att", cfg.c_channels),
      el3_att_(s, rng, p + ".el3.att", cfg.c_channels) {}

std::array<Var, 3> FeatureGeneration::forward(const Var& x) const {
    Var c1 = el1_att_.forward(el1_rb_.forward(el1_conv_.forward(x)));
    Var c2 = el2_att_.forward(el2_rb_.forward(el2_conv_.forward(c1)));
    Var c3 = el3_att_.forward(el3_rb_.forward(el3_conv_.forward(c2)));
    return {c1, c2, c3};
}

FeatureFusion::FeatureFusion(ParamStore& s, Rng& rng, const std::string& p,
                             const ContextNetConfig& cfg)
    : down1_(s, rng, p + ".down1", cfg.c_channels, cfg.c_channels, 3, 2, 1),
      fl1_conv_(s, rng, p + ".fl1.conv", 2 * cfg.c_channels, cfg.c_channels, 3, 1, 1),
      down2_(s, rng, p + ".down2", cfg.c_channels, cfg.c_channels, 3, 2, 1),
      fl2_conv_(s, rng, p + ".fl2.conv", 2 * cfg.c_channels, cfg.c_channels, 3, 1, 1),
      out1_(s, rng, p + ".out1", cfg.c_channels, cfg.c_hyper_channels, 3, 2, 1),
      out2_(s, rng, p + ".out2", cfg.c_hyper_channels, cfg.c_hyper_channels, 3, 2, 1),
      fl1_rb_(s, rng, p + ".fl1.rb", cfg.c_channels),
      fl2_rb_(s, rng, p + ".fl2.rb", cfg.c_channels) {}

Var FeatureFusion::forward(const Var& c1, const Var& c2, const Var& c3) const {
    const int h = c1->value.dim(1), w = c1->value.dim(2);
    if (c2->value.dim(1) != h / 2 || c2->value.dim(2) != w / 2 || c3->value.dim(1) != h / 4 ||
        c3->value.dim(2) != w / 4)
        throw ShapeError("feature_fusion: inputs violate the 1, 1/2, 1/4 scale ratios");
    Var f1 = fl1_rb_.forward(fl1_conv_.forward(concat_ch({down1_.forward(c1), c2})));
    Var f2 = fl2_rb_.forward(fl2_conv_.forward(concat_ch({down2_.forward(f1), c3})));
    return out2_.forward(relu(out1_.forward(f2)));
}

ContextNet::ContextNet(ParamStore& s, Rng& rng, const std::string& p, const ContextNetConfig& cfg,
                       bool pip_enabled)
    : cfg_(cfg), pip_enabled_(pip_enabled) {
    cfg.validate();
    if (pip_enabled_) pip_ = Pip(s, rng, p + ".pip", cfg);
    fg_ = FeatureGeneration(s, rng, p + ".fg", pip_enabled_ ? 3 : 1, cfg);
    ff_ = FeatureFusion(s, rng, p + ".ff", cfg);
}

ContextNet::Output ContextNet::forward(const Tensor& depth01, bool zeros_mode) const {
    if (depth01.ndim() != 3 || depth01.dim(0) != 1)
        throw ShapeError("context input must be {1,H,W}");
    const int h = depth01.dim(1), w = depth01.dim(2);
    if (h % 16 != 0 || w % 16 != 0)
        throw ShapeError("context input dims must be divisible by 16, got " +
                         std::to_string(h) + "x" + std::to_string(w));
    Var input = constant(zeros_mode ? Tensor::zeros({1, h, w}) : depth01);

    Output out;
    Var mcm_in = input;
    if (pip_enabled_) {
        out.c_pre = pip_.forward(input);
        mcm_in = out.c_pre;
    }
    auto scales = fg_.forward(mcm_in);
    out.c1 = scales[0];
    out.c2 = scales[1];
    out.c3 = scales[2];
    out.c_hyper = ff_.forward(out.c1, out.c2, out.c3);
    return out;
}

Tensor random_color_transform(const Tensor& image, std::uint64_t seed) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError("random_color_transform expects {3,H,W}");
    Rng rng(seed);
    const double contrast = rng.uniform(0.5, 1.5);
    const double brightness = rng.uniform(-0.25, 0.25);
    const bool invert = rng.bernoulli(0.5);

    const std::size_t plane = image.numel() / 3;
    Tensor out(image.shape());
    for (int c = 0; c < 3; ++c) {
        const double* src = image.data() + c * plane;
        double* dst = out.data() + c * plane;
        double mean = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mean += src[i];
        mean /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            double v = mean + (src[i] - mean) * contrast + brightness;
            if (invert) v = 1.0 - v;
            dst[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

Var prediction_loss(const Var& pred, const Tensor& image, std::uint64_t seed) {
    if (!pred->value.same_shape(image))
        throw ShapeError("prediction_loss: prediction and image shapes differ");
    return mse_to(pred, random_color_transform(image, seed));
}

}  // namespace pcic
