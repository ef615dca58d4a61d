#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "pcic/nn.hpp"
#include "pcic/projection.hpp"

namespace pcic {

struct ContextNetConfig {
    int c_channels = 32;        // C: channels of c1..c3
    int c_hyper_channels = 64;  // C': channels of c_hyper
    int pip_width = 64;         // internal width of the prediction net

    void validate() const {
        if (c_channels <= 0 || c_hyper_channels <= 0 || pip_width <= 0)
            throw ConfigError("context channels must be positive");
    }
};

/// Point-to-image prediction: maps the (scaled) equalized depth raster to a
/// dense 3-channel image-like prediction through a final sigmoid.
/// conv3x3 -> res-block -> attention-block -> res-block -> conv3x3 -> sigmoid.
class Pip {
public:
    Pip() = default;
    Pip(ParamStore& store, Rng& rng, const std::string& prefix, const ContextNetConfig& cfg);
    ag::Var forward(const ag::Var& depth01) const;

private:
    Conv2d conv_in_, conv_out_;
    ResBlock rb1_, rb2_;
    AttentionBlock att_;
};

/// Multi-scale feature generation: one extraction layer (conv + res-block +
/// attention-block) per scale, the scale-2 and scale-3 convolutions double
/// as the stride-2 downsamplers.
class FeatureGeneration {
public:
    FeatureGeneration() = default;
    FeatureGeneration(ParamStore& store, Rng& rng, const std::string& prefix, int in_channels,
                      const ContextNetConfig& cfg);
    std::array<ag::Var, 3> forward(const ag::Var& x) const;

private:
    Conv2d el1_conv_, el2_conv_, el3_conv_;
    ResBlock el1_rb_, el2_rb_, el3_rb_;
    AttentionBlock el1_att_, el2_att_, el3_att_;
};

/// Fusion of the three scales down to the latent (H/16) resolution:
/// downsample c1, concat c2, fusion layer (conv + res-block); downsample,
/// concat c3, fusion layer; then two stride-2 convolutions.
class FeatureFusion {
public:
    FeatureFusion() = default;
    FeatureFusion(ParamStore& store, Rng& rng, const std::string& prefix,
                  const ContextNetConfig& cfg);
    ag::Var forward(const ag::Var& c1, const ag::Var& c2, const ag::Var& c3) const;

private:
    Conv2d down1_, fl1_conv_, down2_, fl2_conv_, out1_, out2_;
    ResBlock fl1_rb_, fl2_rb_;
};

/// Full point-cloud branch: PIP (optional) followed by feature generation
/// and fusion. `pip_enabled=false` feeds the depth raster directly into the
/// multi-scale stage (its input width becomes 1).
class ContextNet {
public:
    struct Output {
        ag::Var c_pre;  // null when the prediction stage is bypassed
        ag::Var c1, c2, c3, c_hyper;
    };

    ContextNet() = default;
    ContextNet(ParamStore& store, Rng& rng, const std::string& prefix,
               const ContextNetConfig& cfg, bool pip_enabled);

    /// Builds the context set from a {1,H,W} depth tensor in [0,1]. H and W
    /// must be divisible by 16. `zeros_mode` replaces the input with an
    /// all-zero raster of the same shape.
    Output forward(const Tensor& depth01, bool zeros_mode) const;

    bool pip_enabled() const { return pip_enabled_; }
    const ContextNetConfig& config() const { return cfg_; }

private:
    ContextNetConfig cfg_;
    bool pip_enabled_ = true;
    Pip pip_;
    FeatureGeneration fg_;
    FeatureFusion ff_;
};

/// Deterministic photometric jitter of the prediction target: contrast scale
/// in [0.5,1.5] about each channel mean, brightness offset in [-0.25,0.25],
/// inversion with probability 1/2, clamped to [0,1]. Draw order is
/// contrast, brightness, inversion.
Tensor random_color_transform(const Tensor& image, std::uint64_t seed);

/// MSE between the prediction and the color-transformed target.
ag::Var prediction_loss(const ag::Var& pred, const Tensor& image, std::uint64_t seed);

}  // namespace pcic
