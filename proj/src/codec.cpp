#include "pcic/codec.hpp"

#include <cfenv>
#include <cmath>

#include "pcic/entropy_models.hpp"

namespace pcic {

using namespace ag;

AnalysisTransform::AnalysisTransform(ParamStore& s, Rng& rng, const std::string& p,
                                     const CodecConfig& cfg, int ctx)
    : ctx_channels_(ctx),
      s1_(s, rng, p + ".s1", 3 + ctx, cfg.n_channels, 5, 2, 2),
      s2_(s, rng, p + ".s2", cfg.n_channels + ctx, cfg.n_channels, 5, 2, 2),
      s3_(s, rng, p + ".s3", cfg.n_channels + ctx, cfg.n_channels, 5, 2, 2),
      s4_(s, rng, p + ".s4", cfg.n_channels, cfg.m_channels, 5, 2, 2),
      g1_(s, p + ".gdn1", cfg.n_channels, false),
      g2_(s, p + ".gdn2", cfg.n_channels, false),
      g3_(s, p + ".gdn3", cfg.n_channels, false) {}

Var AnalysisTransform::forward(const Var& x, const Var& c1, const Var& c2, const Var& c3) const {
    if (x->value.ndim() != 3 || x->value.dim(0) != 3)
        throw ShapeError("analysis expects a {3,H,W} image");
    if (x->value.dim(1) % 16 != 0 || x->value.dim(2) % 16 != 0)
        throw ShapeError("analysis input dims must be divisible by 16");
    if (ctx_channels_ > 0 && (!c1 || !c2 || !c3))
        throw ShapeError("analysis: context tensors required for a conditional transform");
    Var h = x;
    if (ctx_channels_ > 0) h = concat_ch({h, c1});
    h = g1_.forward(s1_.forward(h));
    if (ctx_channels_ > 0) h = concat_ch({h, c2});
    h = g2_.forward(s2_.forward(h));
    if (ctx_channels_ > 0) h = concat_ch({h, c3});
    h = g3_.forward(s3_.forward(h));
    return s4_.forward(h);
}

SynthesisTransform::SynthesisTransform(ParamStore& s, Rng& rng, const std::string& p,
                                       const CodecConfig& cfg, int ctx)
    : ctx_channels_(ctx),
      u1_(s, rng, p + ".u1", cfg.m_channels, cfg.n_channels, 5, 2, 2, 1),
      u2_(s, rng, p + ".u2", cfg.n_channels, cfg.n_channels, 5, 2, 2, 1),
      u3_(s, rng, p + ".u3", cfg.n_channels + ctx, cfg.n_channels, 5, 2, 2, 1),
      u4_(s, rng, p + ".u4", cfg.n_channels + ctx, cfg.n_channels, 5, 2, 2, 1),
      ig1_(s, p + ".igdn1", cfg.n_channels, true),
      ig2_(s, p + ".igdn2", cfg.n_channels, true),
      ig3_(s, p + ".igdn3", cfg.n_channels, true),
      out_(s, rng, p + ".out", cfg.n_channels + ctx, 3, 3, 1, 1) {}

Var SynthesisTransform::forward(const Var& y_hat, const Var& c1, const Var& c2, const Var& c3,
                                bool train_mode) const {
    if (ctx_channels_ > 0 && (!c1 || !c2 || !c3))
        throw ShapeError("synthesis: context tensors required for a conditional transform");
    Var h = ig1_.forward(u1_.forward(y_hat));
    h = ig2_.forward(u2_.forward(h));  // H/4 scale
    if (ctx_channels_ > 0) h = concat_ch({h, c3});
    h = ig3_.forward(u3_.forward(h));  // H/2 scale
    if (ctx_channels_ > 0) h = concat_ch({h, c2});
    h = u4_.forward(h);  // full scale
    if (ctx_channels_ > 0) h = concat_ch({h, c1});
    Var out = out_.forward(h);
    if (train_mode) return out;
    Tensor clamped = clamp01(out->value);
    return constant(std::move(clamped));
}

HyperAnalysis::HyperAnalysis(ParamStore& s, Rng& rng, const std::string& p, const CodecConfig& cfg)
    : c1_(s, rng, p + ".c1", cfg.m_channels, cfg.hyper_channels, 3, 1, 1),
      c2_(s, rng, p + ".c2", cfg.hyper_channels, cfg.hyper_channels, 5, 2, 2),
      c3_(s, rng, p + ".c3", cfg.hyper_channels, cfg.hyper_channels, 5, 2, 2) {}

Var HyperAnalysis::forward(const Var& y) const {
    return c3_.forward(relu(c2_.forward(relu(c1_.forward(y)))));
}

HyperSynthesis::HyperSynthesis(ParamStore& s, Rng& rng, const std::string& p,
                               const CodecConfig& cfg)
    : d1_(s, rng, p + ".d1", cfg.hyper_channels, cfg.hyper_channels, 5, 2, 2, 1),
      d2_(s, rng, p + ".d2", cfg.hyper_channels, cfg.hyper_channels, 5, 2, 2, 1),
      c3_(s, rng, p + ".c3", cfg.hyper_channels, 2 * cfg.m_channels, 3, 1, 1) {}

Var HyperSynthesis::forward(const Var& z_hat) const {
    return c3_.forward(relu(d2_.forward(relu(d1_.forward(z_hat)))));
}

HyperRefiner::HyperRefiner(ParamStore& s, Rng& rng, const std::string& p, const CodecConfig& cfg,
                           int c_hyper_channels)
    : m_(cfg.m_channels),
      c_hyper_channels_(c_hyper_channels),
      c1_(s, rng, p + ".c1", 2 * cfg.m_channels + c_hyper_channels, 2 * cfg.m_channels, 3, 1, 1),
      c2_(s, rng, p + ".c2", 2 * cfg.m_channels, 2 * cfg.m_channels, 3, 1, 1),
      c3_(s, rng, p + ".c3", 2 * cfg.m_channels, 2 * cfg.m_channels, 3, 1, 1) {}

HyperRefiner::Params HyperRefiner::forward(const Var& z_hyper, const Var& c_hyper) const {
    Var ctx = c_hyper;
    if (!ctx)
        ctx = constant(
            Tensor::zeros({c_hyper_channels_, z_hyper->value.dim(1), z_hyper->value.dim(2)}));
    if (ctx->value.dim(1) != z_hyper->value.dim(1) || ctx->value.dim(2) != z_hyper->value.dim(2))
        throw ShapeError("hyper_refine: spatial dims of z_hyper and c_hyper differ");
    Var h = c3_.forward(relu(c2_.forward(relu(c1_.forward(concat_ch({z_hyper, ctx}))))));
    Params out;
    out.mu = slice_ch(h, 0, m_);
    out.sigma = add_scalar(softplus(slice_ch(h, m_, m_)), kSigmaMin);
    return out;
}

Tensor round_half_even(const Tensor& v) {
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) out[i] = std::nearbyint(v[i]);
    return out;
}

Tensor make_unit_noise(const std::vector<int>& shape, Rng& rng) {
    Tensor noise(shape);
    for (std::size_t i = 0; i < noise.numel(); ++i) noise[i] = rng.uniform() - 0.5;
    return noise;
}

Tensor quantize(const Tensor& v, QuantizeMode mode, const Tensor* means, Rng* rng) {
    if (mode == QuantizeMode::noise) {
        if (!rng) throw ConfigError("quantize: noise mode needs a generator");
        Tensor out(v.shape());
        for (std::size_t i = 0; i < v.numel(); ++i) out[i] = v[i] + (rng->uniform() - 0.5);
        return out;
    }
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) {
        const double mean = means ? (*means)[i] : 0.0;
        out[i] = std::nearbyint(v[i] - mean) + mean;
    }
    return out;
}

}  // namespace pcic
