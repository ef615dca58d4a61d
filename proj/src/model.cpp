#include "pcic/model.hpp"

#include <cmath>

#include "pcic/checkpoint.hpp"

namespace pcic {

using namespace ag;
using nlohmann::json;

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_pip: return "no_pip";
        case Ablation::no_fg: return "no_fg";
        case Ablation::no_ff: return "no_ff";
        case Ablation::encoder_only: return "encoder_only";
        case Ablation::decoder_only: return "decoder_only";
        case Ablation::zeros_input: return "zeros_input";
    }
    return "full";
}

Ablation ablation_from_string(const std::string& s) {
    for (Ablation a : {Ablation::full, Ablation::no_pip, Ablation::no_fg, Ablation::no_ff,
                       Ablation::encoder_only, Ablation::decoder_only, Ablation::zeros_input})
        if (to_string(a) == s) return a;
    throw ConfigError("unknown ablation '" + s + "'");
}

std::string to_string(InjectionSides s) {
    switch (s) {
        case InjectionSides::encoder: return "encoder";
        case InjectionSides::decoder: return "decoder";
        case InjectionSides::both: return "both";
    }
    return "both";
}

InjectionSides injection_sides_from_string(const std::string& s) {
    if (s == "encoder") return InjectionSides::encoder;
    if (s == "decoder") return InjectionSides::decoder;
    if (s == "both") return InjectionSides::both;
    throw ConfigError("unknown injection_sides '" + s + "'");
}

void ModelConfig::canonicalize() {
    if (ablation == Ablation::encoder_only) codec.injection_sides = InjectionSides::encoder;
    if (ablation == Ablation::decoder_only) codec.injection_sides = InjectionSides::decoder;
}

void ModelConfig::validate() const {
    ctx.validate();
    codec.validate();
    if (lambda <= 0.0) throw ConfigError("lambda must be > 0");
}

json model_config_to_json(const ModelConfig& cfg) {
    return json{{"name", cfg.name},
                {"lambda", cfg.lambda},
                {"ablation", to_string(cfg.ablation)},
                {"init_seed", cfg.init_seed},
                {"context",
                 {{"c_channels", cfg.ctx.c_channels},
                  {"c_hyper_channels", cfg.ctx.c_hyper_channels},
                  {"pip_width", cfg.ctx.pip_width}}},
                {"codec",
                 {{"n_channels", cfg.codec.n_channels},
                  {"m_channels", cfg.codec.m_channels},
                  {"hyper_channels", cfg.codec.hyper_channels},
                  {"lambda_index", cfg.codec.lambda_index},
                  {"conditional", cfg.codec.conditional},
                  {"injection_sides", to_string(cfg.codec.injection_sides)}}}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.name = j.value("name", cfg.name);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.ablation = ablation_from_string(j.value("ablation", "full"));
    cfg.init_seed = j.value("init_seed", cfg.init_seed);
    if (j.contains("context")) {
        const auto& c = j.at("context");
        cfg.ctx.c_channels = c.value("c_channels", cfg.ctx.c_channels);
        cfg.ctx.c_hyper_channels = c.value("c_hyper_channels", cfg.ctx.c_hyper_channels);
        cfg.ctx.pip_width = c.value("pip_width", cfg.ctx.pip_width);
    }
    if (j.contains("codec")) {
        const auto& c = j.at("codec");
        cfg.codec.n_channels = c.value("n_channels", cfg.codec.n_channels);
        cfg.codec.m_channels = c.value("m_channels", cfg.codec.m_channels);
        cfg.codec.hyper_channels = c.value("hyper_channels", cfg.codec.hyper_channels);
        cfg.codec.lambda_index = c.value("lambda_index", cfg.codec.lambda_index);
        cfg.codec.conditional = c.value("conditional", cfg.codec.conditional);
        cfg.codec.injection_sides =
            injection_sides_from_string(c.value("injection_sides", "both"));
    }
    cfg.canonicalize();
    cfg.validate();
    return cfg;
}

Model::Model(ModelConfig cfg_in) : cfg(std::move(cfg_in)) {
    cfg.canonicalize();
    cfg.validate();
    Rng rng(cfg.init_seed);
    if (cfg.codec.conditional)
        context_net = ContextNet(params, rng, "ctx", cfg.ctx, cfg.ablation != Ablation::no_pip);
    const int ctx_ch = cfg.codec.conditional ? cfg.ctx.c_channels : 0;
    analysis = AnalysisTransform(params, rng, "ga", cfg.codec, ctx_ch);
    synthesis = SynthesisTransform(params, rng, "gs", cfg.codec, ctx_ch);
    hyper_analysis = HyperAnalysis(params, rng, "ha", cfg.codec);
    hyper_synthesis = HyperSynthesis(params, rng, "hs", cfg.codec);
    hyper_refiner = HyperRefiner(params, rng, "hr", cfg.codec, cfg.ctx.c_hyper_channels);
    factorized = FactorizedModel(params, rng, "fz", cfg.codec.hyper_channels);
}

bool Model::encoder_injection() const {
    return cfg.codec.conditional && cfg.codec.injection_sides != InjectionSides::decoder &&
           cfg.ablation != Ablation::no_fg;
}

bool Model::decoder_injection() const {
    return cfg.codec.conditional && cfg.codec.injection_sides != InjectionSides::encoder &&
           cfg.ablation != Ablation::no_fg;
}

bool Model::hyper_injection() const {
    return cfg.codec.conditional && cfg.ablation != Ablation::no_ff;
}

Model::ContextTensors Model::zero_context(int h, int w) const {
    ContextTensors t;
    const int c = cfg.ctx.c_channels;
    t.c1 = constant(Tensor::zeros({c, h, w}));
    t.c2 = constant(Tensor::zeros({c, h / 2, w / 2}));
    t.c3 = constant(Tensor::zeros({c, h / 4, w / 4}));
    t.c_hyper = constant(Tensor::zeros({cfg.ctx.c_hyper_channels, h / 16, w / 16}));
    return t;
}

Model::ContextTensors Model::make_context(const Tensor& depth01, bool zeros) const {
    ContextNet::Output out = context_net.forward(depth01, zeros);
    return ContextTensors{out.c1, out.c2, out.c3, out.c_hyper, out.c_pre};
}

Model::TrainResult Model::train_loss(const Tensor& image, const Tensor& depth01, double alpha,
                                     Rng& noise_rng, std::uint64_t target_seed) const {
    if (image.ndim() != 3 || image.dim(0) != 3) throw ShapeError("train_loss expects {3,H,W}");
    const int h = image.dim(1), w = image.dim(2);
    if (h % 64 != 0 || w % 64 != 0)
        throw ShapeError("train patches must have dims divisible by 64");
    if (cfg.codec.conditional && !depth01.same_shape(Tensor::zeros({1, h, w})))
        throw ShapeError("depth patch must be {1,H,W} matching the image");

    ContextTensors ctx;
    ContextTensors zeros_ctx = cfg.codec.conditional ? zero_context(h, w) : ContextTensors{};
    if (cfg.codec.conditional) ctx = make_context(depth01, zeros_input());

    const bool enc = encoder_injection(), dec = decoder_injection(), hyp = hyper_injection();
    Var x = constant(image);
    Var y = cfg.codec.conditional
                ? analysis.forward(x, enc ? ctx.c1 : zeros_ctx.c1, enc ? ctx.c2 : zeros_ctx.c2,
                                   enc ? ctx.c3 : zeros_ctx.c3)
                : analysis.forward(x, nullptr, nullptr, nullptr);
    Var y_tilde = add_noise(y, make_unit_noise(y->value.shape(), noise_rng));
    Var z = hyper_analysis.forward(y);
    Var z_tilde = add_noise(z, make_unit_noise(z->value.shape(), noise_rng));
    Var z_hyper = hyper_synthesis.forward(z_tilde);
    HyperRefiner::Params ep = hyper_refiner.forward(z_hyper, hyp ? ctx.c_hyper : nullptr);
    Var bits_y = gaussian_bits(y_tilde, ep.mu, ep.sigma);
    Var bits_z = factorized.bits(z_tilde);
    Var x_hat = cfg.codec.conditional
                    ? synthesis.forward(y_tilde, dec ? ctx.c1 : zeros_ctx.c1,
                                        dec ? ctx.c2 : zeros_ctx.c2, dec ? ctx.c3 : zeros_ctx.c3,
                                        /*train_mode=*/true)
                    : synthesis.forward(y_tilde, nullptr, nullptr, nullptr, true);

    const double px = static_cast<double>(h) * w;
    Var rate = scale(add(bits_y, bits_z), 1.0 / px);
    Var mse8 = scale(mse_to(x_hat, image), 255.0 * 255.0);
    Var loss = add(rate, scale(mse8, cfg.lambda));

    LossComponents comp;
    comp.alpha = alpha;
    comp.rate_y_bpp = bits_y->value[0] / px;
    comp.rate_z_bpp = bits_z->value[0] / px;
    comp.mse = mse8->value[0];

    if (cfg.codec.conditional && context_net.pip_enabled()) {
        Var lpre = prediction_loss(ctx.c_pre, image, target_seed);
        comp.lpre = lpre->value[0];
        if (alpha != 0.0) loss = add(loss, scale(lpre, alpha));
    }
    comp.total = loss->value[0];

    if (!std::isfinite(comp.total)) {
        std::string which = !std::isfinite(comp.rate_y_bpp)   ? "rate_y"
                            : !std::isfinite(comp.rate_z_bpp) ? "rate_z"
                            : !std::isfinite(comp.mse)        ? "mse"
                                                              : "lpre";
        throw DivergenceError("non-finite training loss (component: " + which + ")");
    }
    return TrainResult{loss, comp};
}

namespace {

int pad64(int v) { return (v + 63) / 64 * 64; }

Tensor pad_depth01(const EqualizedDepthMap& depth, int ph, int pw) {
    Tensor t = depth_to_tensor(depth);
    if (t.dim(1) == ph && t.dim(2) == pw) return t;
    return pad_to_multiple_reflect(t, 64);
}

}  // namespace

Model::CompressResult Model::compress(const Tensor& image, const EqualizedDepthMap* depth,
                                      bool zeros_override) const {
    if (image.ndim() != 3 || image.dim(0) != 3) throw ShapeError("compress expects {3,H,W}");
    const int h = image.dim(1), w = image.dim(2);
    if (h > 0xFFFF || w > 0xFFFF) throw ShapeError("frame exceeds 16-bit header dimensions");
    const bool zeros = zeros_override || zeros_input();
    if (cfg.codec.conditional && !zeros) {
        if (!depth) throw ConfigError("conditional model needs a depth map (or zeros mode)");
        if (depth->h != h || depth->w != w)
            throw ShapeError("depth map dims differ from the image");
    }

    const int ph = pad64(h), pw = pad64(w);
    Tensor x = pad_to_multiple_reflect(image, 64);

    ContextTensors ctx;
    ContextTensors zctx = cfg.codec.conditional ? zero_context(ph, pw) : ContextTensors{};
    if (cfg.codec.conditional) {
        Tensor depth01 = (zeros || !depth) ? Tensor::zeros({1, ph, pw})
                                           : pad_depth01(*depth, ph, pw);
        ctx = make_context(depth01, zeros);
    }

    const bool enc = encoder_injection(), dec = decoder_injection(), hyp = hyper_injection();
    Var xv = constant(x);
    Var y = cfg.codec.conditional
                ? analysis.forward(xv, enc ? ctx.c1 : zctx.c1, enc ? ctx.c2 : zctx.c2,
                                   enc ? ctx.c3 : zctx.c3)
                : analysis.forward(xv, nullptr, nullptr, nullptr);
    Var z = hyper_analysis.forward(y);
    Tensor z_sym = round_half_even(z->value);

    Var z_hyper = hyper_synthesis.forward(constant(z_sym));
    HyperRefiner::Params ep = hyper_refiner.forward(z_hyper, hyp ? ctx.c_hyper : nullptr);
    const Tensor& mu = ep.mu->value;
    const Tensor& sigma = ep.sigma->value;
    Tensor y_sym = round_half_even(sub(y->value, mu));

    CompressResult res;
    res.stream.header.conditional = cfg.codec.conditional;
    res.stream.header.zeros_mode = zeros;
    res.stream.header.encoder_only =
        cfg.codec.conditional && cfg.codec.injection_sides == InjectionSides::encoder;
    res.stream.header.decoder_only =
        cfg.codec.conditional && cfg.codec.injection_sides == InjectionSides::decoder;
    res.stream.header.lambda_index = static_cast<std::uint8_t>(cfg.codec.lambda_index);
    res.stream.header.orig_h = static_cast<std::uint16_t>(h);
    res.stream.header.orig_w = static_cast<std::uint16_t>(w);
    res.stream.z_payload = encode_z_payload(z_sym, factorized);
    res.stream.y_payload = encode_y_payload(y_sym, sigma);
    res.est_bits_z = factorized.bits_eval(z_sym);
    res.est_bits_y = estimate_rate_y(add(y_sym, mu), mu, sigma);

    Var y_hat = constant(add(y_sym, mu));
    Var x_hat = cfg.codec.conditional
                    ? synthesis.forward(y_hat, dec ? ctx.c1 : zctx.c1, dec ? ctx.c2 : zctx.c2,
                                        dec ? ctx.c3 : zctx.c3, false)
                    : synthesis.forward(y_hat, nullptr, nullptr, nullptr, false);
    res.reconstruction = crop_top_left(x_hat->value, h, w);
    return res;
}

Tensor Model::decompress(const Bitstream& stream, const EqualizedDepthMap* depth) const {
    const auto& hd = stream.header;
    if (hd.lambda_index != cfg.codec.lambda_index)
        throw ModelMismatch("stream lambda_index " + std::to_string(hd.lambda_index) +
                            " does not match model " + std::to_string(cfg.codec.lambda_index));
    if (hd.conditional != cfg.codec.conditional)
        throw ModelMismatch("stream conditional flag does not match the model");
    const bool model_enc_only =
        cfg.codec.conditional && cfg.codec.injection_sides == InjectionSides::encoder;
    const bool model_dec_only =
        cfg.codec.conditional && cfg.codec.injection_sides == InjectionSides::decoder;
    if (hd.encoder_only != model_enc_only || hd.decoder_only != model_dec_only)
        throw ModelMismatch("stream injection-side flags do not match the model");

    const int h = hd.orig_h, w = hd.orig_w;
    const int ph = pad64(h), pw = pad64(w);
    const bool zeros = hd.zeros_mode;
    if (cfg.codec.conditional && !zeros) {
        if (!depth) throw ConfigError("conditional stream needs the depth map");
        if (depth->h != h || depth->w != w)
            throw ShapeError("depth map dims differ from the stream header");
    }

    ContextTensors ctx;
    ContextTensors zctx = cfg.codec.conditional ? zero_context(ph, pw) : ContextTensors{};
    if (cfg.codec.conditional) {
        Tensor depth01 = (zeros || !depth) ? Tensor::zeros({1, ph, pw})
                                           : pad_depth01(*depth, ph, pw);
        ctx = make_context(depth01, zeros);
    }

    Tensor z_sym = decode_z_payload(stream.z_payload,
                                    {cfg.codec.hyper_channels, ph / 64, pw / 64}, factorized);
    Var z_hyper = hyper_synthesis.forward(constant(z_sym));
    const bool hyp = hyper_injection();
    HyperRefiner::Params ep = hyper_refiner.forward(z_hyper, hyp ? ctx.c_hyper : nullptr);
    Tensor y_sym = decode_y_payload(stream.y_payload, ep.sigma->value);
    Var y_hat = constant(add(y_sym, ep.mu->value));

    const bool dec = decoder_injection();
    Var x_hat = cfg.codec.conditional
                    ? synthesis.forward(y_hat, dec ? ctx.c1 : zctx.c1, dec ? ctx.c2 : zctx.c2,
                                        dec ? ctx.c3 : zctx.c3, false)
                    : synthesis.forward(y_hat, nullptr, nullptr, nullptr, false);
    return crop_top_left(x_hat->value, h, w);
}

void Model::save(const std::filesystem::path& path) const {
    CheckpointData data;
    data.meta["model_config"] = model_config_to_json(cfg);
    data.arrays = params.all();
    write_checkpoint(path, data);
}

Model Model::load(const std::filesystem::path& path) {
    CheckpointData data = read_checkpoint(path);
    if (!data.meta.contains("model_config"))
        throw IoError("checkpoint '" + path.string() + "' lacks a model config");
    Model model(model_config_from_json(data.meta.at("model_config")));
    for (auto& [name, tensor] : model.params.all()) {
        auto it = data.arrays.find(name);
        if (it == data.arrays.end())
            throw IoError("checkpoint missing parameter '" + name + "'");
        if (it->second.shape() != tensor.shape())
            throw IoError("checkpoint parameter '" + name + "' has wrong shape");
        tensor = it->second;
    }
    return model;
}

}  // namespace pcic
