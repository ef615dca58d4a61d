#include "pcic/entropy_models.hpp"

#include <algorithm>
#include <cmath>

#include "pcic/autograd.hpp"

namespace pcic {

using namespace ag;

std::vector<std::uint32_t> pmf_to_quantized_cdf(const std::vector<double>& pmf) {
    const std::size_t s = pmf.size();
    if (s == 0) throw ShapeError("pmf_to_quantized_cdf: empty pmf");
    std::vector<long long> freq(s);
    long long sum = 0;
    for (std::size_t i = 0; i < s; ++i) {
        const double p = std::max(pmf[i], 0.0);
        freq[i] = std::max(1LL, std::llround(p * static_cast<double>(kCdfTotal)));
        sum += freq[i];
    }
    long long diff = sum - static_cast<long long>(kCdfTotal);
    while (diff != 0) {
        // Adjust the largest adjustable bin by as much as possible; ties go
        // to the lowest index so the result is deterministic.
        std::size_t best = s;
        for (std::size_t i = 0; i < s; ++i) {
            if (diff > 0 && freq[i] <= 1) continue;
            if (best == s || freq[i] > freq[best]) best = i;
        }
        if (best == s) throw Error("pmf_to_quantized_cdf: cannot renormalize");
        if (diff > 0) {
            const long long take = std::min(diff, freq[best] - 1);
            freq[best] -= take;
            diff -= take;
        } else {
            freq[best] -= diff;  // diff < 0: add
            diff = 0;
        }
    }
    std::vector<std::uint32_t> cdf(s + 1, 0);
    for (std::size_t i = 0; i < s; ++i) cdf[i + 1] = cdf[i] + static_cast<std::uint32_t>(freq[i]);
    return cdf;
}

namespace {

GaussianScaleTable build_scale_table() {
    constexpr int kLevels = 64;
    constexpr double kMaxScale = 256.0;
    GaussianScaleTable t;
    t.scales.resize(kLevels);
    const double lo = std::log(kSigmaMin), hi = std::log(kMaxScale);
    for (int i = 0; i < kLevels; ++i)
        t.scales[i] = std::exp(lo + (hi - lo) * i / (kLevels - 1));

    t.offsets.resize(kLevels);
    t.cdfs.resize(kLevels);
    for (int i = 0; i < kLevels; ++i) {
        const double sigma = t.scales[i];
        const int tmax = static_cast<int>(std::ceil(sigma * 6.2));
        t.offsets[i] = tmax;
        std::vector<double> pmf(2 * tmax + 2, 0.0);  // symbols -t..t plus escape
        for (int k = -tmax; k <= tmax; ++k) {
            double p;
            if (k == -tmax)
                p = normal_cdf((k + 0.5) / sigma);  // lower tail folded in
            else if (k == tmax)
                p = 1.0 - normal_cdf((k - 0.5) / sigma);  // upper tail folded in
            else
                p = normal_cdf((k + 0.5) / sigma) - normal_cdf((k - 0.5) / sigma);
            pmf[static_cast<std::size_t>(k + tmax)] = p;
        }
        t.cdfs[i] = pmf_to_quantized_cdf(pmf);
    }
    return t;
}

}  // namespace

const GaussianScaleTable& GaussianScaleTable::instance() {
    static const GaussianScaleTable table = build_scale_table();
    return table;
}

int GaussianScaleTable::index_for(double sigma) const {
    auto it = std::lower_bound(scales.begin(), scales.end(), sigma);
    if (it == scales.end()) return static_cast<int>(scales.size()) - 1;
    return static_cast<int>(it - scales.begin());
}

double table_rate_bits(const Tensor& symbols, const Tensor& sigma) {
    const auto& table = GaussianScaleTable::instance();
    const double inv_ln2 = 1.4426950408889634074;
    double bits = 0.0;
    for (std::size_t i = 0; i < symbols.numel(); ++i) {
        const int idx = table.index_for(sigma[i]);
        const auto& cdf = table.cdfs[static_cast<std::size_t>(idx)];
        const int offset = table.offsets[static_cast<std::size_t>(idx)];
        const long long k = std::llround(symbols[i]);
        std::size_t sym;
        if (k < -offset || k > offset)
            sym = cdf.size() - 2;  // escape
        else
            sym = static_cast<std::size_t>(k + offset);
        const double p = static_cast<double>(cdf[sym + 1] - cdf[sym]) / kCdfTotal;
        bits += -std::log(p) * inv_ln2;
        if (sym == cdf.size() - 2) bits += 32.0;  // bypass payload for escapes
    }
    return bits;
}

double estimate_rate_y(const Tensor& y_hat, const Tensor& mu, const Tensor& sigma) {
    return gaussian_bits(constant(y_hat), constant(mu), constant(sigma))->value[0];
}

FactorizedModel::FactorizedModel(ParamStore& store, Rng& rng, std::string prefix, int channels,
                                 std::vector<int> filters)
    : store_(&store), prefix_(std::move(prefix)), channels_(channels) {
    dims_.push_back(1);
    for (int f : filters) dims_.push_back(f);
    dims_.push_back(1);
    const int layers = static_cast<int>(dims_.size()) - 1;
    const double scale = std::pow(10.0, 1.0 / layers);
    for (int k = 0; k < layers; ++k) {
        const int rows = dims_[static_cast<std::size_t>(k + 1)];
        const int cols = dims_[static_cast<std::size_t>(k)];
        const double h_init = std::log(std::expm1(1.0 / (scale * rows)));
        store.get_or_create(prefix_ + ".h" + std::to_string(k), {channels_, rows, cols},
                            [h_init](Tensor& t) {
                                for (std::size_t i = 0; i < t.numel(); ++i) t[i] = h_init;
                            });
        store.get_or_create(prefix_ + ".b" + std::to_string(k), {channels_, rows},
                            [&rng](Tensor& t) {
                                for (std::size_t i = 0; i < t.numel(); ++i)
                                    t[i] = rng.uniform(-0.5, 0.5);
                            });
        if (k < layers - 1)
            store.get_or_create(prefix_ + ".a" + std::to_string(k), {channels_, rows},
                                [](Tensor&) {});
    }
}

std::vector<std::string> FactorizedModel::param_names() const {
    std::vector<std::string> names;
    const int layers = static_cast<int>(dims_.size()) - 1;
    for (int k = 0; k < layers; ++k) {
        names.push_back(prefix_ + ".h" + std::to_string(k));
        names.push_back(prefix_ + ".b" + std::to_string(k));
        if (k < layers - 1) names.push_back(prefix_ + ".a" + std::to_string(k));
    }
    return names;
}

namespace {

constexpr int kMaxWidth = 8;  // supports filters up to width 8

double softplus_s(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
double sigmoid_s(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double dsigmoid_logit(double logit) {
    const double e = std::exp(-std::abs(logit));
    const double d = 1.0 + e;
    return e / (d * d);
}

/// Forward chain for one scalar; stores pre-activation vectors per layer.
struct ChainState {
    double w[8][kMaxWidth];  // pre-activations, per layer
    double v[9][kMaxWidth];  // post-activations (v[0] = input)
};

double chain_forward(const std::vector<int>& dims, const double* const* h,
                     const double* const* b, const double* const* a, double x, ChainState& st) {
    const int layers = static_cast<int>(dims.size()) - 1;
    st.v[0][0] = x;
    for (int k = 0; k < layers; ++k) {
        const int rows = dims[static_cast<std::size_t>(k + 1)];
        const int cols = dims[static_cast<std::size_t>(k)];
        for (int i = 0; i < rows; ++i) {
            double acc = b[k][i];
            for (int j = 0; j < cols; ++j) acc += softplus_s(h[k][i * cols + j]) * st.v[k][j];
            st.w[k][i] = acc;
            st.v[k + 1][i] =
                (k < layers - 1) ? acc + std::tanh(a[k][i]) * std::tanh(acc) : acc;
        }
    }
    return st.w[layers - 1][0];
}

/// Backward through the chain from d(logit); accumulates into param grads
/// (same per-channel pointer layout as forward) and returns d/dx.
double chain_backward(const std::vector<int>& dims, const double* const* h,
                      const double* const*, const double* const* a, const ChainState& st,
                      double dlogit, double* const* gh, double* const* gb, double* const* ga) {
    const int layers = static_cast<int>(dims.size()) - 1;
    double g[kMaxWidth] = {dlogit};  // gradient w.r.t. w[layers-1]
    for (int k = layers - 1; k >= 0; --k) {
        const int rows = dims[static_cast<std::size_t>(k + 1)];
        const int cols = dims[static_cast<std::size_t>(k)];
        double gv[kMaxWidth] = {};
        for (int i = 0; i < rows; ++i) {
            gb[k][i] += g[i];
            for (int j = 0; j < cols; ++j) {
                const double hij = h[k][i * cols + j];
                gh[k][i * cols + j] += g[i] * st.v[k][j] * sigmoid_s(hij);
                gv[j] += g[i] * softplus_s(hij);
            }
        }
        if (k == 0) return gv[0];
        // gv is d/d v[k]; v[k] = w[k-1] + tanh(a[k-1]) ⊙ tanh(w[k-1])
        const int prev_rows = dims[static_cast<std::size_t>(k)];
        for (int i = 0; i < prev_rows; ++i) {
            const double tw = std::tanh(st.w[k - 1][i]);
            const double ta = std::tanh(a[k - 1][i]);
            ga[k - 1][i] += gv[i] * tw * (1.0 - ta * ta);
            g[i] = gv[i] * (1.0 + ta * (1.0 - tw * tw));
        }
    }
    return 0.0;  // unreachable
}

}  // namespace

double FactorizedModel::logit(double x, int channel) const {
    const int layers = static_cast<int>(dims_.size()) - 1;
    const double* h[8];
    const double* b[8];
    const double* a[8];
    for (int k = 0; k < layers; ++k) {
        const int rows = dims_[static_cast<std::size_t>(k + 1)];
        const int cols = dims_[static_cast<std::size_t>(k)];
        h[k] = store_->at(prefix_ + ".h" + std::to_string(k)).data() +
               static_cast<std::size_t>(channel) * rows * cols;
        b[k] = store_->at(prefix_ + ".b" + std::to_string(k)).data() +
               static_cast<std::size_t>(channel) * rows;
        a[k] = (k < layers - 1)
                   ? store_->at(prefix_ + ".a" + std::to_string(k)).data() +
                         static_cast<std::size_t>(channel) * rows
                   : nullptr;
    }
    ChainState st;
    return chain_forward(dims_, h, b, a, x, st);
}

namespace {

/// Stable mass of [x-0.5, x+0.5) from the two logits. Evaluating both
/// sigmoids on the side away from saturation keeps the small difference
/// accurate deep in either tail.
double mass_from_logits(double l_lo, double l_up) {
    const double sign = (l_lo + l_up < 0.0) ? 1.0 : -1.0;
    return std::abs(sigmoid_s(sign * l_up) - sigmoid_s(sign * l_lo));
}

}  // namespace

double FactorizedModel::bits_eval(const Tensor& z) const {
    if (z.ndim() != 3 || z.dim(0) != channels_)
        throw ShapeError("factorized bits: input must be {C,h,w} with C=" +
                         std::to_string(channels_));
    const double inv_ln2 = 1.4426950408889634074;
    const std::size_t plane = z.numel() / static_cast<std::size_t>(channels_);
    double bits = 0.0;
    for (int c = 0; c < channels_; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            const double x = z[static_cast<std::size_t>(c) * plane + i];
            const double p = mass_from_logits(logit(x - 0.5, c), logit(x + 0.5, c));
            bits += -std::log(std::max(p, ag::likelihood_floor)) * inv_ln2;
        }
    return bits;
}

Var FactorizedModel::bits(const Var& z) const {
    if (z->value.ndim() != 3 || z->value.dim(0) != channels_)
        throw ShapeError("factorized bits: input must be {C,h,w} with C=" +
                         std::to_string(channels_));
    const int layers = static_cast<int>(dims_.size()) - 1;

    std::vector<Var> parents{z};
    std::vector<Var> h_leaves, b_leaves, a_leaves;
    for (int k = 0; k < layers; ++k) {
        h_leaves.push_back(leaf(store_->at(prefix_ + ".h" + std::to_string(k)),
                                prefix_ + ".h" + std::to_string(k)));
        b_leaves.push_back(leaf(store_->at(prefix_ + ".b" + std::to_string(k)),
                                prefix_ + ".b" + std::to_string(k)));
        if (k < layers - 1)
            a_leaves.push_back(leaf(store_->at(prefix_ + ".a" + std::to_string(k)),
                                    prefix_ + ".a" + std::to_string(k)));
        else
            a_leaves.push_back(nullptr);
        parents.push_back(h_leaves[static_cast<std::size_t>(k)]);
        parents.push_back(b_leaves[static_cast<std::size_t>(k)]);
        if (a_leaves[static_cast<std::size_t>(k)])
            parents.push_back(a_leaves[static_cast<std::size_t>(k)]);
    }

    const double bits_value = bits_eval(z->value);
    const auto dims = dims_;
    const int channels = channels_;
    const std::size_t plane = z->value.numel() / static_cast<std::size_t>(channels);
    const double inv_ln2 = 1.4426950408889634074;

    return make_node(
        Tensor({1}, {bits_value}), parents,
        [z, h_leaves, b_leaves, a_leaves, dims, channels, plane, layers, inv_ln2](Node& self) {
            const double gout = self.grad[0];
            const double* h[8];
            const double* b[8];
            const double* a[8];
            double* gh[8];
            double* gb[8];
            double* ga[8];
            Tensor* zgrad = z->requires_grad ? &ensure_grad(*z) : nullptr;
            for (int k = 0; k < layers; ++k) {
                ensure_grad(*h_leaves[static_cast<std::size_t>(k)]);
                ensure_grad(*b_leaves[static_cast<std::size_t>(k)]);
                if (a_leaves[static_cast<std::size_t>(k)])
                    ensure_grad(*a_leaves[static_cast<std::size_t>(k)]);
            }
            for (int c = 0; c < channels; ++c) {
                for (int k = 0; k < layers; ++k) {
                    const int rows = dims[static_cast<std::size_t>(k + 1)];
                    const int cols = dims[static_cast<std::size_t>(k)];
                    const std::size_t hoff = static_cast<std::size_t>(c) * rows * cols;
                    const std::size_t boff = static_cast<std::size_t>(c) * rows;
                    h[k] = h_leaves[static_cast<std::size_t>(k)]->value.data() + hoff;
                    b[k] = b_leaves[static_cast<std::size_t>(k)]->value.data() + boff;
                    gh[k] = h_leaves[static_cast<std::size_t>(k)]->grad.data() + hoff;
                    gb[k] = b_leaves[static_cast<std::size_t>(k)]->grad.data() + boff;
                    if (a_leaves[static_cast<std::size_t>(k)]) {
                        a[k] = a_leaves[static_cast<std::size_t>(k)]->value.data() + boff;
                        ga[k] = a_leaves[static_cast<std::size_t>(k)]->grad.data() + boff;
                    } else {
                        a[k] = nullptr;
                        ga[k] = nullptr;
                    }
                }
                for (std::size_t i = 0; i < plane; ++i) {
                    const std::size_t idx = static_cast<std::size_t>(c) * plane + i;
                    const double x = z->value[idx];
                    ChainState st_lo, st_up;
                    const double l_lo = chain_forward(dims, h, b, a, x - 0.5, st_lo);
                    const double l_up = chain_forward(dims, h, b, a, x + 0.5, st_up);
                    const double p = mass_from_logits(l_lo, l_up);
                    if (p < ag::likelihood_floor) continue;  // floored; gate gradient
                    const double dbits_dp = -gout * inv_ln2 / p;
                    // p = F(l_up) - F(l_lo)
                    const double d_up = dbits_dp * dsigmoid_logit(l_up);
                    const double d_lo = -dbits_dp * dsigmoid_logit(l_lo);
                    double dx = chain_backward(dims, h, b, a, st_lo, d_lo, gh, gb, ga);
                    dx += chain_backward(dims, h, b, a, st_up, d_up, gh, gb, ga);
                    if (zgrad) (*zgrad)[idx] += dx;
                }
            }
        });
}

std::vector<FactorizedModel::ChannelCdf> FactorizedModel::build_cdfs() const {
    std::vector<ChannelCdf> out(static_cast<std::size_t>(channels_));
    constexpr int kMaxSupport = 4096;
    for (int c = 0; c < channels_; ++c) {
        auto cdf_at = [&](double x) { return sigmoid_s(logit(x, c)); };
        int lo = 0, hi = 0;
        while (cdf_at(lo - 0.5) > kCdfTailMass && lo > -kMaxSupport) --lo;
        while (1.0 - cdf_at(hi + 0.5) > kCdfTailMass && hi < kMaxSupport) ++hi;
        std::vector<double> pmf(static_cast<std::size_t>(hi - lo + 1) + 1, 0.0);
        for (int k = lo; k <= hi; ++k) {
            double p;
            if (k == lo)
                p = cdf_at(k + 0.5);
            else if (k == hi)
                p = 1.0 - cdf_at(k - 0.5);
            else
                p = cdf_at(k + 0.5) - cdf_at(k - 0.5);
            pmf[static_cast<std::size_t>(k - lo)] = std::max(p, 0.0);
        }
        out[static_cast<std::size_t>(c)].min_value = lo;
        out[static_cast<std::size_t>(c)].cdf = pmf_to_quantized_cdf(pmf);
    }
    return out;
}

}  // namespace pcic
