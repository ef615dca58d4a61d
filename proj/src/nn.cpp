#include "pcic/nn.hpp"

#include <cmath>

namespace pcic {

using namespace ag;

Tensor& ParamStore::get_or_create(const std::string& name, const std::vector<int>& shape,
                                  const std::function<void(Tensor&)>& init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        if (it->second.shape() != shape)
            throw ShapeError("param '" + name + "' exists with shape " +
                             Tensor::shape_str(it->second.shape()) + ", requested " +
                             Tensor::shape_str(shape));
        return it->second;
    }
    Tensor t(shape);
    init(t);
    return params_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::set(const std::string& name, Tensor t) { params_[name] = std::move(t); }

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
}

namespace {

auto conv_init(Rng& rng, int fan_in) {
    // matches the common deep-learning default for conv layers; keeps
    // stacked transposed-conv/IGDN chains from amplifying at initialization
    const double std = std::sqrt(1.0 / (3.0 * fan_in));
    return [&rng, std](Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * std;
    };
}

auto zero_init() {
    return [](Tensor&) {};
}

}  // namespace

Conv2d::Conv2d(ParamStore& s, Rng& rng, std::string name, int in_ch, int out_ch, int k, int stride_,
               int pad_, bool bias)
    : store(&s), wname(name + ".w"), bname(bias ? name + ".b" : ""), stride(stride_), pad(pad_) {
    s.get_or_create(wname, {out_ch, in_ch, k, k}, conv_init(rng, in_ch * k * k));
    if (bias) s.get_or_create(bname, {out_ch}, zero_init());
}

Var Conv2d::forward(const Var& x) const {
    Var w = leaf(store->at(wname), wname);
    Var b = bname.empty() ? nullptr : leaf(store->at(bname), bname);
    return conv2d(x, w, b, stride, pad);
}

ConvTranspose2d::ConvTranspose2d(ParamStore& s, Rng& rng, std::string name, int in_ch, int out_ch,
                                 int k, int stride_, int pad_, int out_pad_, bool bias)
    : store(&s),
      wname(name + ".w"),
      bname(bias ? name + ".b" : ""),
      stride(stride_),
      pad(pad_),
      out_pad(out_pad_) {
    s.get_or_create(wname, {in_ch, out_ch, k, k}, conv_init(rng, in_ch * k * k));
    if (bias) s.get_or_create(bname, {out_ch}, zero_init());
}

Var ConvTranspose2d::forward(const Var& x) const {
    Var w = leaf(store->at(wname), wname);
    Var b = bname.empty() ? nullptr : leaf(store->at(bname), bname);
    return conv2d_transpose(x, w, b, stride, pad, out_pad);
}

Gdn::Gdn(ParamStore& s, std::string name, int ch, bool inverse_)
    : store(&s), beta_name(name + ".beta"), gamma_name(name + ".gamma"), inverse(inverse_) {
    s.get_or_create(beta_name, {ch}, [](Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 1.0;
    });
    s.get_or_create(gamma_name, {ch, ch, 1, 1}, [ch](Tensor& t) {
        for (int i = 0; i < ch; ++i) t[static_cast<std::size_t>(i) * ch + i] = 0.1;
    });
}

Var Gdn::forward(const Var& x) const {
    Var beta = lower_bound(leaf(store->at(beta_name), beta_name), beta_floor);
    Var gamma = lower_bound(leaf(store->at(gamma_name), gamma_name), 0.0);
    Var den = conv2d(square(x), gamma, beta, 1, 0);
    return inverse ? mul(x, sqrt_v(den)) : mul(x, rsqrt_v(den));
}

ResBlock::ResBlock(ParamStore& s, Rng& rng, const std::string& name, int ch)
    : conv1(s, rng, name + ".conv1", ch, ch, 3, 1, 1),
      conv2(s, rng, name + ".conv2", ch, ch, 3, 1, 1) {}

Var ResBlock::forward(const Var& x) const {
    return add(x, conv2.forward(relu(conv1.forward(relu(x)))));
}

AttentionBlock::AttentionBlock(ParamStore& s, Rng& rng, const std::string& name, int ch)
    : trunk1(s, rng, name + ".trunk1", ch),
      trunk2(s, rng, name + ".trunk2", ch),
      mask1(s, rng, name + ".mask1", ch),
      mask2(s, rng, name + ".mask2", ch),
      mask_proj(s, rng, name + ".mask_proj", ch, ch, 1, 1, 0) {}

Var AttentionBlock::forward(const Var& x) const {
    Var trunk = trunk2.forward(trunk1.forward(x));
    Var mask = sigmoid(mask_proj.forward(mask2.forward(mask1.forward(x))));
    return add(x, mul(trunk, mask));
}

double adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
                 const AdamConfig& cfg) {
    double sq_norm = 0.0;
    for (const auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.numel(); ++i) sq_norm += g[i] * g[i];
    const double norm = std::sqrt(sq_norm);
    const double clip_scale =
        (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        Tensor& m = state.m.emplace(name, Tensor::zeros(p.shape())).first->second;
        Tensor& v = state.v.emplace(name, Tensor::zeros(p.shape())).first->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g[i] * clip_scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    return norm;
}

void accumulate_grads(GradMap& dst, const GradMap& src) {
    for (const auto& [name, g] : src) {
        auto it = dst.find(name);
        if (it == dst.end()) {
            dst.emplace(name, g.clone());
        } else {
            for (std::size_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
        }
    }
}

void scale_grads(GradMap& grads, double s) {
    for (auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= s;
}

}  // namespace pcic
