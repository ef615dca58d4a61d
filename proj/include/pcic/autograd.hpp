#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pcic/tensor.hpp"

namespace pcic::ag {

/// Node of the dynamic compute graph. Forward values are computed eagerly by
/// the op constructors; `backprop` pushes this node's gradient into its
/// parents. Parameters enter graphs as named leaves wrapping the parameter
/// store's tensors (shared storage, no copy), so graphs for different
/// samples can be built and run independently and gradients are returned
/// per-call instead of being accumulated in shared state.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
};

using Var = std::shared_ptr<Node>;
using GradMap = std::map<std::string, Tensor>;

Var constant(Tensor v);
Var leaf(Tensor v, std::string name);
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

/// Allocate (zeros) the gradient buffer if absent and return it.
Tensor& ensure_grad(Node& n);

/// Reverse-mode sweep from a scalar root. Returns gradients of all named
/// leaves reachable from the root.
GradMap backward(const Var& root);

// --- ops ---------------------------------------------------------------

/// 2-d convolution; x {C,H,W}, w {O,C,K,K}, optional b {O}.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

/// Transposed convolution; x {C,H,W}, w {C,O,K,K}, optional b {O}.
/// Output spatial size (H-1)*stride - 2*pad + K + out_pad.
Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad, int out_pad);

Var concat_ch(const std::vector<Var>& xs);
Var slice_ch(const Var& x, int begin, int count);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var sqrt_v(const Var& x);
Var rsqrt_v(const Var& x);
Var square(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

/// max(x, bound) elementwise, with the gradient passing when x >= bound or
/// when the incoming gradient would push x upward (the standard trick that
/// keeps clamped parameters trainable).
Var lower_bound(const Var& x, double bound);

/// x + noise with identity gradient (training-time quantization surrogate).
Var add_noise(const Var& x, const Tensor& noise);

Var mean_all(const Var& x);
Var sum_all(const Var& x);

/// Mean squared error against a fixed target; scalar output.
Var mse_to(const Var& pred, const Tensor& target);

/// Total bits of the latent under a Gaussian convolved with the unit
/// uniform: sum over elements of -log2( Phi((d+.5)/sigma) - Phi((d-.5)/sigma) ),
/// d = y - mu. Probability mass is floored at `likelihood_floor` with a
/// gated gradient. All three inputs share one shape; sigma must be > 0.
Var gaussian_bits(const Var& y, const Var& mu, const Var& sigma);

constexpr double likelihood_floor = 1e-9;

/// Standard normal CDF (double precision, erfc-based).
double normal_cdf(double x);

// --- raw conv kernels (shared with non-graph evaluation paths) ----------
Tensor conv_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv_bwd_data(const Tensor& g, const Tensor& w, int stride, int pad, int in_h, int in_w);
Tensor conv_wgrad(const Tensor& x, const Tensor& g, int k, int stride, int pad);

}  // namespace pcic::ag
