#pragma once

#include <optional>
#include <string>

#include "pcic/context_net.hpp"
#include "pcic/nn.hpp"

namespace pcic {

enum class InjectionSides { encoder, decoder, both };

struct CodecConfig {
    int n_channels = 128;      // transform width N
    int m_channels = 128;      // latent width M
    int hyper_channels = 192;  // hyper-latent width
    int lambda_index = 0;
    bool conditional = true;
    InjectionSides injection_sides = InjectionSides::both;

    void validate() const {
        if (n_channels <= 0 || m_channels <= 0 || hyper_channels <= 0)
            throw ConfigError("codec channel widths must be positive");
        if (lambda_index < 0 || lambda_index > 255)
            throw ConfigError("lambda_index must fit in a byte");
    }
};

/// Four stride-2 stages with GDN after the first three. When ctx_channels>0
/// the caller concatenates c1/c2/c3 ahead of stages 1-3 (zeros when an
/// ablation disables the path).
class AnalysisTransform {
public:
    AnalysisTransform() = default;
    AnalysisTransform(ParamStore& store, Rng& rng, const std::string& prefix,
                      const CodecConfig& cfg, int ctx_channels);
    ag::Var forward(const ag::Var& x, const ag::Var& c1, const ag::Var& c2,
                    const ag::Var& c3) const;

    int ctx_channels() const { return ctx_channels_; }

private:
    int ctx_channels_ = 0;
    Conv2d s1_, s2_, s3_, s4_;
    Gdn g1_, g2_, g3_;
};

/// Mirror of the analysis: four stride-2 transposed convolutions with IGDN,
/// context injected after the stages emitting the H/4, H/2 and H scales,
/// and a final 3x3 projection to RGB.
class SynthesisTransform {
public:
    SynthesisTransform() = default;
    SynthesisTransform(ParamStore& store, Rng& rng, const std::string& prefix,
                       const CodecConfig& cfg, int ctx_channels);
    /// `train_mode` skips the [0,1] clamp so training gradients pass.
    ag::Var forward(const ag::Var& y_hat, const ag::Var& c1, const ag::Var& c2, const ag::Var& c3,
                    bool train_mode) const;

    int ctx_channels() const { return ctx_channels_; }

private:
    int ctx_channels_ = 0;
    ConvTranspose2d u1_, u2_, u3_, u4_;
    Gdn ig1_, ig2_, ig3_;
    Conv2d out_;
};

/// Hyper path, unconditional (mean-scale form: operates on y directly).
class HyperAnalysis {
public:
    HyperAnalysis() = default;
    HyperAnalysis(ParamStore& store, Rng& rng, const std::string& prefix, const CodecConfig& cfg);
    ag::Var forward(const ag::Var& y) const;

private:
    Conv2d c1_, c2_, c3_;
};

class HyperSynthesis {
public:
    HyperSynthesis() = default;
    HyperSynthesis(ParamStore& store, Rng& rng, const std::string& prefix, const CodecConfig& cfg);
    ag::Var forward(const ag::Var& z_hat) const;

private:
    ConvTranspose2d d1_, d2_;
    Conv2d c3_;
};

/// Three 3x3 convolutions over concat(z_hyper, c_hyper) emitting the
/// entropy parameters; sigma = softplus(raw) + kSigmaMin.
class HyperRefiner {
public:
    HyperRefiner() = default;
    HyperRefiner(ParamStore& store, Rng& rng, const std::string& prefix, const CodecConfig& cfg,
                 int c_hyper_channels);

    struct Params {
        ag::Var mu, sigma;
    };
    /// c_hyper may be null; an all-zero raster substitutes so the operator
    /// stays total in unconditional mode.
    Params forward(const ag::Var& z_hyper, const ag::Var& c_hyper) const;

private:
    int m_ = 0;
    int c_hyper_channels_ = 0;
    Conv2d c1_, c2_, c3_;
};

enum class QuantizeMode { noise, round };

/// noise: adds i.i.d. uniform [-0.5, 0.5) draws; round: round-half-to-even
/// of (v - mean) plus mean.
Tensor quantize(const Tensor& v, QuantizeMode mode, const Tensor* means, Rng* rng);

/// Elementwise round-half-to-even.
Tensor round_half_even(const Tensor& v);

/// Uniform [-0.5, 0.5) noise tensor.
Tensor make_unit_noise(const std::vector<int>& shape, Rng& rng);

}  // namespace pcic
