#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcic/nn.hpp"

namespace pcic {

constexpr double kSigmaMin = 0.11;
constexpr int kCdfPrecision = 16;
constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;
constexpr double kCdfTailMass = 1e-9;

/// Quantizes a pmf to a cumulative table with total 2^16 where every symbol
/// keeps at least one quantum. Returns cdf of length pmf.size()+1 with
/// cdf[0]=0 and cdf.back()=2^16.
std::vector<std::uint32_t> pmf_to_quantized_cdf(const std::vector<double>& pmf);

/// Precomputed zero-mean Gaussian CDF tables over a log-spaced set of
/// scales. Symbols cover [-t, t] with the <= 1e-9 tails folded into the edge
/// bins, plus one trailing escape slot for out-of-support values.
struct GaussianScaleTable {
    std::vector<double> scales;
    std::vector<int> offsets;  // symbol index = value + offset
    std::vector<std::vector<std::uint32_t>> cdfs;

    static const GaussianScaleTable& instance();
    /// Index of the smallest tabulated scale >= sigma (clamped to the ends).
    int index_for(double sigma) const;
};

/// Exact rate of quantized latents under the tabulated CDFs (what the range
/// coder pays, up to renormalization overhead). Used by the coder-vs-
/// estimate harness.
double table_rate_bits(const Tensor& symbols, const Tensor& sigma);

/// Non-graph Gaussian rate estimate (same formula as the training-time op).
double estimate_rate_y(const Tensor& y_hat, const Tensor& mu, const Tensor& sigma);

/// Univariate learned cumulative per channel (the nonparametric factorized
/// prior of the hyper-latent): a chain of softplus-weighted affine maps with
/// tanh perturbations and a final sigmoid. Provides a differentiable bit
/// count for training and integer CDF tables for coding.
class FactorizedModel {
public:
    FactorizedModel() = default;
    FactorizedModel(ParamStore& store, Rng& rng, std::string prefix, int channels,
                    std::vector<int> filters = {3, 3, 3});

    /// Total bits of a {C,h,w} tensor (training path, noise-quantized input).
    ag::Var bits(const ag::Var& z) const;

    /// Same value without building a graph.
    double bits_eval(const Tensor& z) const;

    struct ChannelCdf {
        int min_value = 0;  // symbol 0 encodes this value
        std::vector<std::uint32_t> cdf;  // last symbol is the escape slot
    };
    std::vector<ChannelCdf> build_cdfs() const;

    int channels() const { return channels_; }
    std::vector<std::string> param_names() const;

    /// Cumulative (pre-sigmoid logit) at x for one channel.
    double logit(double x, int channel) const;

private:
    ParamStore* store_ = nullptr;
    std::string prefix_;
    int channels_ = 0;
    std::vector<int> dims_;  // {1, filters..., 1}
};

}  // namespace pcic
