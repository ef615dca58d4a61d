#pragma once

#include <map>
#include <string>
#include <vector>

#include "pcic/autograd.hpp"
#include "pcic/rng.hpp"
#include "pcic/tensor.hpp"

namespace pcic {

/// Named parameter tensors for one model. Iteration order is name-sorted,
/// which fixes the order of optimizer updates and serialization.
class ParamStore {
public:
    /// Returns the existing tensor or creates one via `init`.
    Tensor& get_or_create(const std::string& name, const std::vector<int>& shape,
                          const std::function<void(Tensor&)>& init);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    void set(const std::string& name, Tensor t);

    std::map<std::string, Tensor>& all() { return params_; }
    const std::map<std::string, Tensor>& all() const { return params_; }
    std::size_t scalar_count() const;

private:
    std::map<std::string, Tensor> params_;
};

struct Conv2d {
    Conv2d() = default;
    Conv2d(ParamStore& store, Rng& rng, std::string name, int in_ch, int out_ch, int k, int stride,
           int pad, bool bias = true);
    ag::Var forward(const ag::Var& x) const;

    ParamStore* store = nullptr;
    std::string wname, bname;
    int stride = 1, pad = 0;
};

struct ConvTranspose2d {
    ConvTranspose2d() = default;
    ConvTranspose2d(ParamStore& store, Rng& rng, std::string name, int in_ch, int out_ch, int k,
                    int stride, int pad, int out_pad, bool bias = true);
    ag::Var forward(const ag::Var& x) const;

    ParamStore* store = nullptr;
    std::string wname, bname;
    int stride = 1, pad = 0, out_pad = 0;
};

/// Generalized divisive normalization, x / sqrt(beta + gamma * x^2), with the
/// multiplicative inverse form used on the synthesis side. Built from graph
/// primitives (square, 1x1 conv, rsqrt) so its gradient needs no special
/// casing. beta and gamma are kept positive through a gated lower bound.
struct Gdn {
    Gdn() = default;
    Gdn(ParamStore& store, std::string name, int ch, bool inverse);
    ag::Var forward(const ag::Var& x) const;

    ParamStore* store = nullptr;
    std::string beta_name, gamma_name;
    bool inverse = false;
    static constexpr double beta_floor = 1e-6;
};

/// Two 3x3 convolutions with pre-activation and an identity skip.
struct ResBlock {
    ResBlock() = default;
    ResBlock(ParamStore& store, Rng& rng, const std::string& name, int ch);
    ag::Var forward(const ag::Var& x) const;

    Conv2d conv1, conv2;
};

/// Residual trunk of two res-blocks, modulated elementwise by a
/// sigmoid-gated mask branch (two res-blocks + 1x1 conv).
struct AttentionBlock {
    AttentionBlock() = default;
    AttentionBlock(ParamStore& store, Rng& rng, const std::string& name, int ch);
    ag::Var forward(const ag::Var& x) const;

    ResBlock trunk1, trunk2, mask1, mask2;
    Conv2d mask_proj;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;  // global gradient norm; <= 0 disables clipping
};

struct AdamState {
    long long t = 0;
    std::map<std::string, Tensor> m, v;
};

/// One Adam update over all params present in `grads`. Returns the global
/// gradient norm before clipping.
double adam_step(ParamStore& params, const ag::GradMap& grads, AdamState& state,
                 const AdamConfig& cfg);

/// Sum `src` into `dst` (missing keys are inserted).
void accumulate_grads(ag::GradMap& dst, const ag::GradMap& src);
void scale_grads(ag::GradMap& g, double s);

}  // namespace pcic
