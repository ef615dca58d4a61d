#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "pcic/bitstream.hpp"
#include "pcic/codec.hpp"
#include "pcic/context_net.hpp"
#include "pcic/entropy_models.hpp"

namespace pcic {

enum class Ablation { full, no_pip, no_fg, no_ff, encoder_only, decoder_only, zeros_input };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
std::string to_string(InjectionSides s);
InjectionSides injection_sides_from_string(const std::string& s);

struct ModelConfig {
    std::string name = "hyper_pc";
    ContextNetConfig ctx;
    CodecConfig codec;
    Ablation ablation = Ablation::full;
    double lambda = 0.016;
    std::uint64_t init_seed = 1;

    /// Folds encoder_only/decoder_only ablations into the codec's
    /// injection_sides so there is one source of truth.
    void canonicalize();
    void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct LossComponents {
    double total = 0.0;
    double rate_y_bpp = 0.0;
    double rate_z_bpp = 0.0;
    double mse = 0.0;  // in 8-bit units (255^2 x mean squared error on [0,1])
    double lpre = 0.0;
    double alpha = 0.0;
};

/// The conditional hyperprior codec plus its point-cloud branch, sharing one
/// parameter store. Forward passes are pure given the parameters; training
/// owns the single writer.
class Model {
public:
    explicit Model(ModelConfig cfg);

    struct TrainResult {
        ag::Var loss;
        LossComponents components;
    };

    /// Differentiable objective on one aligned (image, depth) patch:
    /// R_y + R_z (bits per pixel) + lambda * MSE + alpha * L_pre, with
    /// noise-mode quantization driven by `noise_rng` and the prediction
    /// target jittered by `target_seed`.
    TrainResult train_loss(const Tensor& image, const Tensor& depth01, double alpha, Rng& noise_rng,
                           std::uint64_t target_seed) const;

    struct CompressResult {
        Bitstream stream;
        Tensor reconstruction;  // encoder-side decode, [0,1], original size
        double est_bits_y = 0.0;
        double est_bits_z = 0.0;
    };

    /// Full pipeline on an arbitrary-size frame (reflect-padded to x64).
    /// `depth` must match the image dimensions; it may be null when the
    /// model is unconditional or `zeros_override` is set.
    CompressResult compress(const Tensor& image, const EqualizedDepthMap* depth,
                            bool zeros_override = false) const;

    /// Inverse pipeline; validates the header against this model's
    /// lambda_index / mode flags (ModelMismatch on disagreement).
    Tensor decompress(const Bitstream& stream, const EqualizedDepthMap* depth) const;

    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);

    bool encoder_injection() const;
    bool decoder_injection() const;
    bool hyper_injection() const;
    bool zeros_input() const { return cfg.ablation == Ablation::zeros_input; }

    ModelConfig cfg;
    ParamStore params;
    ContextNet context_net;
    AnalysisTransform analysis;
    SynthesisTransform synthesis;
    HyperAnalysis hyper_analysis;
    HyperSynthesis hyper_synthesis;
    HyperRefiner hyper_refiner;
    FactorizedModel factorized;

private:
    struct ContextTensors {
        ag::Var c1, c2, c3, c_hyper, c_pre;
    };
    ContextTensors make_context(const Tensor& depth01, bool zeros) const;
    ContextTensors zero_context(int h, int w) const;
};

}  // namespace pcic
