#include "pcic/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace pcic::ag {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

int conv_out_extent(int in, int k, int stride, int pad) {
    int num = in + 2 * pad - k;
    if (num < 0) throw ShapeError("conv: kernel larger than padded input");
    return num / stride + 1;
}

/// x {C,H,W} -> col {C*K*K, Ho*Wo}
Tensor im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor col({c * k * k, ho * wo});
    double* out = col.data();
    const double* in = x.data();
    for (int ci = 0; ci < c; ++ci) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                double* row = out + (static_cast<std::size_t>(ci) * k * k + kh * k + kw) *
                                        static_cast<std::size_t>(ho) * wo;
                for (int i = 0; i < ho; ++i) {
                    const int src_i = i * stride - pad + kh;
                    if (src_i < 0 || src_i >= h) {
                        for (int j = 0; j < wo; ++j) row[i * wo + j] = 0.0;
                        continue;
                    }
                    const double* src = in + (static_cast<std::size_t>(ci) * h + src_i) * w;
                    for (int j = 0; j < wo; ++j) {
                        const int src_j = j * stride - pad + kw;
                        row[i * wo + j] = (src_j < 0 || src_j >= w) ? 0.0 : src[src_j];
                    }
                }
            }
        }
    }
    return col;
}

/// Adjoint of im2col: scatter-add col {C*K*K, Ho*Wo} into {C,H,W}.
Tensor col2im(const Tensor& col, int c, int h, int w, int k, int stride, int pad, int ho, int wo) {
    Tensor x({c, h, w});
    double* out = x.data();
    const double* in = col.data();
    for (int ci = 0; ci < c; ++ci) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                const double* row = in + (static_cast<std::size_t>(ci) * k * k + kh * k + kw) *
                                             static_cast<std::size_t>(ho) * wo;
                for (int i = 0; i < ho; ++i) {
                    const int dst_i = i * stride - pad + kh;
                    if (dst_i < 0 || dst_i >= h) continue;
                    double* dst = out + (static_cast<std::size_t>(ci) * h + dst_i) * w;
                    for (int j = 0; j < wo; ++j) {
                        const int dst_j = j * stride - pad + kw;
                        if (dst_j >= 0 && dst_j < w) dst[dst_j] += row[i * wo + j];
                    }
                }
            }
        }
    }
    return x;
}

void check_3d(const Tensor& t, const char* what) {
    if (t.ndim() != 3) throw ShapeError(std::string(what) + " must be rank 3, got " +
                                        Tensor::shape_str(t.shape()));
}

}  // namespace

Tensor conv_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check_3d(x, "conv input");
    if (w.ndim() != 4) throw ShapeError("conv weight must be {O,C,K,K}");
    const int o = w.dim(0), c = w.dim(1), k = w.dim(2);
    if (w.dim(3) != k) throw ShapeError("conv weight must be square");
    if (x.dim(0) != c)
        throw ShapeError("conv: input channels " + std::to_string(x.dim(0)) +
                         " != weight channels " + std::to_string(c));
    const int ho = conv_out_extent(x.dim(1), k, stride, pad);
    const int wo = conv_out_extent(x.dim(2), k, stride, pad);
    Tensor col = im2col(x, k, stride, pad, ho, wo);
    Tensor out({o, ho, wo});
    MapC wm(w.data(), o, c * k * k);
    MapC cm(col.data(), c * k * k, ho * wo);
    MapM om(out.data(), o, ho * wo);
    om.noalias() = wm * cm;
    if (!b.empty()) {
        if (b.numel() != static_cast<std::size_t>(o)) throw ShapeError("conv bias size mismatch");
        for (int oi = 0; oi < o; ++oi) om.row(oi).array() += b[oi];
    }
    return out;
}

Tensor conv_bwd_data(const Tensor& g, const Tensor& w, int stride, int pad, int in_h, int in_w) {
    const int o = w.dim(0), c = w.dim(1), k = w.dim(2);
    const int ho = g.dim(1), wo = g.dim(2);
    Tensor col({c * k * k, ho * wo});
    MapC wm(w.data(), o, c * k * k);
    MapC gm(g.data(), o, ho * wo);
    MapM cm(col.data(), c * k * k, ho * wo);
    cm.noalias() = wm.transpose() * gm;
    return col2im(col, c, in_h, in_w, k, stride, pad, ho, wo);
}

Tensor conv_wgrad(const Tensor& x, const Tensor& g, int k, int stride, int pad) {
    const int c = x.dim(0);
    const int o = g.dim(0), ho = g.dim(1), wo = g.dim(2);
    Tensor col = im2col(x, k, stride, pad, ho, wo);
    Tensor dw({o, c, k, k});
    MapC gm(g.data(), o, ho * wo);
    MapC cm(col.data(), c * k * k, ho * wo);
    MapM dwm(dw.data(), o, c * k * k);
    dwm.noalias() = gm * cm.transpose();
    return dw;
}

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var leaf(Tensor v, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->is_leaf = true;
    n->name = std::move(name);
    return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

Tensor& ensure_grad(Node& n) {
    if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

GradMap backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root->requires_grad) return {};
    // Iterative post-order topological sort; each node enters the stack once.
    std::vector<Node*> topo;
    std::unordered_set<Node*> entered{root.get()};
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    while (!stack.empty()) {
        Node* node = stack.back().first;
        const std::size_t idx = stack.back().second;
        if (idx < node->parents.size()) {
            stack.back().second = idx + 1;
            Node* next = node->parents[idx].get();
            if (next->requires_grad && !entered.count(next)) {
                entered.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : topo) n->grad = Tensor();
    ensure_grad(*root)[0] = 1.0;
    GradMap grads;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->grad.empty()) continue;  // no gradient reached this node
        if (n->backprop) n->backprop(*n);
        if (n->is_leaf) grads.emplace(n->name, n->grad);
    }
    return grads;
}

namespace {

void axpy(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    Tensor out = conv_fwd(x->value, w->value, b ? b->value : Tensor(), stride, pad);
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    const int in_h = x->value.dim(1), in_w = x->value.dim(2);
    const int k = w->value.dim(2);
    return make_node(std::move(out), std::move(parents),
                     [x, w, b, stride, pad, in_h, in_w, k](Node& self) {
                         if (x->requires_grad)
                             axpy(ensure_grad(*x),
                                  conv_bwd_data(self.grad, w->value, stride, pad, in_h, in_w));
                         if (w->requires_grad)
                             axpy(ensure_grad(*w), conv_wgrad(x->value, self.grad, k, stride, pad));
                         if (b && b->requires_grad) {
                             Tensor& db = ensure_grad(*b);
                             const int o = self.grad.dim(0);
                             const std::size_t plane =
                                 static_cast<std::size_t>(self.grad.dim(1)) * self.grad.dim(2);
                             for (int oi = 0; oi < o; ++oi) {
                                 double acc = 0.0;
                                 const double* g = self.grad.data() + oi * plane;
                                 for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                                 db[oi] += acc;
                             }
                         }
                     });
}

Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad, int out_pad) {
    check_3d(x->value, "deconv input");
    if (w->value.ndim() != 4) throw ShapeError("deconv weight must be {C,O,K,K}");
    const int c = w->value.dim(0), o = w->value.dim(1), k = w->value.dim(2);
    if (x->value.dim(0) != c) throw ShapeError("deconv: input channel mismatch");
    const int h = x->value.dim(1), w_in = x->value.dim(2);
    const int ho = (h - 1) * stride - 2 * pad + k + out_pad;
    const int wo = (w_in - 1) * stride - 2 * pad + k + out_pad;
    if (ho <= 0 || wo <= 0) throw ShapeError("deconv: non-positive output extent");
    // Forward of a transposed conv is the data-gradient of the matching conv.
    Tensor out = conv_bwd_data(x->value, w->value, stride, pad, ho, wo);
    if (b) {
        if (b->value.numel() != static_cast<std::size_t>(o))
            throw ShapeError("deconv bias size mismatch");
        for (int oi = 0; oi < o; ++oi) {
            double* p = out.data() + static_cast<std::size_t>(oi) * ho * wo;
            for (int i = 0; i < ho * wo; ++i) p[i] += b->value[oi];
        }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), std::move(parents), [x, w, b, stride, pad, k](Node& self) {
        if (x->requires_grad)
            axpy(ensure_grad(*x), conv_fwd(self.grad, w->value, Tensor(), stride, pad));
        if (w->requires_grad)
            axpy(ensure_grad(*w), conv_wgrad(self.grad, x->value, k, stride, pad));
        if (b && b->requires_grad) {
            Tensor& db = ensure_grad(*b);
            const int o2 = self.grad.dim(0);
            const std::size_t plane =
                static_cast<std::size_t>(self.grad.dim(1)) * self.grad.dim(2);
            for (int oi = 0; oi < o2; ++oi) {
                double acc = 0.0;
                const double* g = self.grad.data() + oi * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                db[oi] += acc;
            }
        }
    });
}

Var concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_ch: empty input list");
    const int h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
    int c_total = 0;
    for (const auto& x : xs) {
        check_3d(x->value, "concat input");
        if (x->value.dim(1) != h || x->value.dim(2) != w)
            throw ShapeError("concat_ch: spatial dims differ");
        c_total += x->value.dim(0);
    }
    Tensor out({c_total, h, w});
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + off);
        off += x->value.numel();
    }
    return make_node(std::move(out), xs, [xs](Node& self) {
        std::size_t off2 = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) {
                Tensor& gx = ensure_grad(*x);
                const double* g = self.grad.data() + off2;
                for (std::size_t i = 0; i < x->value.numel(); ++i) gx[i] += g[i];
            }
            off2 += x->value.numel();
        }
    });
}

Var slice_ch(const Var& x, int begin, int count) {
    check_3d(x->value, "slice input");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (begin < 0 || begin + count > c) throw ShapeError("slice_ch: range out of bounds");
    Tensor out({count, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::copy(x->value.data() + begin * plane, x->value.data() + (begin + count) * plane,
              out.data());
    return make_node(std::move(out), {x}, [x, begin, plane](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = ensure_grad(*x);
        double* dst = gx.data() + begin * plane;
        for (std::size_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad[i];
    });
}

namespace {

template <typename F, typename DF>
Var unary_op(const Var& x, F f, DF df) {
    Tensor out(x->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(x->value[i]);
    return make_node(std::move(out), {x}, [x, df](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = ensure_grad(*x);
        for (std::size_t i = 0; i < gx.numel(); ++i)
            gx[i] += self.grad[i] * df(x->value[i], self.value[i]);
    });
}

}  // namespace

Var relu(const Var& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& x) {
    return unary_op(
        x,
        [](double v) {
            // log1p(exp(v)) without overflow for large v.
            return v > 30.0 ? v : std::log1p(std::exp(v));
        },
        [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Var sqrt_v(const Var& x) {
    return unary_op(
        x, [](double v) { return std::sqrt(v); },
        [](double, double y) { return 0.5 / y; });
}

Var rsqrt_v(const Var& x) {
    return unary_op(
        x, [](double v) { return 1.0 / std::sqrt(v); },
        [](double v, double y) { return -0.5 * y / v; });
}

Var square(const Var& x) {
    return unary_op(
        x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeError("add: shape mismatch");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) axpy(ensure_grad(*a), self.grad);
        if (b->requires_grad) axpy(ensure_grad(*b), self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeError("sub: shape mismatch");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) axpy(ensure_grad(*a), self.grad);
        if (b->requires_grad) {
            Tensor& gb = ensure_grad(*b);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeError("mul: shape mismatch");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) {
            Tensor& ga = ensure_grad(*a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = ensure_grad(*b);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += self.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * s;
    return make_node(std::move(out), {a}, [a, s](Node& self) {
        if (!a->requires_grad) return;
        Tensor& ga = ensure_grad(*a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + s;
    return make_node(std::move(out), {a}, [a](Node& self) {
        if (a->requires_grad) axpy(ensure_grad(*a), self.grad);
    });
}

Var lower_bound(const Var& x, double bound) {
    Tensor out(x->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(x->value[i], bound);
    return make_node(std::move(out), {x}, [x, bound](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = ensure_grad(*x);
        for (std::size_t i = 0; i < gx.numel(); ++i) {
            const bool pass = x->value[i] >= bound || self.grad[i] < 0.0;
            if (pass) gx[i] += self.grad[i];
        }
    });
}

Var add_noise(const Var& x, const Tensor& noise) {
    if (!x->value.same_shape(noise)) throw ShapeError("add_noise: shape mismatch");
    Tensor out(x->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] + noise[i];
    return make_node(std::move(out), {x}, [x](Node& self) {
        if (x->requires_grad) axpy(ensure_grad(*x), self.grad);
    });
}

Var mean_all(const Var& x) {
    const double n = static_cast<double>(x->value.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < x->value.numel(); ++i) acc += x->value[i];
    return make_node(Tensor({1}, {acc / n}), {x}, [x, n](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = ensure_grad(*x);
        const double g = self.grad[0] / n;
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

Var sum_all(const Var& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x->value.numel(); ++i) acc += x->value[i];
    return make_node(Tensor({1}, {acc}), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        Tensor& gx = ensure_grad(*x);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[0];
    });
}

Var mse_to(const Var& pred, const Tensor& target) {
    if (!pred->value.same_shape(target)) throw ShapeError("mse_to: shape mismatch");
    const double n = static_cast<double>(pred->value.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred->value.numel(); ++i) {
        const double d = pred->value[i] - target[i];
        acc += d * d;
    }
    return make_node(Tensor({1}, {acc / n}), {pred}, [pred, target, n](Node& self) {
        if (!pred->requires_grad) return;
        Tensor& g = ensure_grad(*pred);
        const double s = 2.0 * self.grad[0] / n;
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * (pred->value[i] - target[i]);
    });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

namespace {

double normal_pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

}  // namespace

Var gaussian_bits(const Var& y, const Var& mu, const Var& sigma) {
    if (!y->value.same_shape(mu->value) || !y->value.same_shape(sigma->value))
        throw ShapeError("gaussian_bits: shape mismatch");
    const std::size_t n = y->value.numel();
    const double inv_ln2 = 1.4426950408889634074;
    double total_bits = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = sigma->value[i];
        const double d = y->value[i] - mu->value[i];
        const double p = normal_cdf((d + 0.5) / s) - normal_cdf((d - 0.5) / s);
        total_bits += -std::log(std::max(p, likelihood_floor)) * inv_ln2;
    }
    return make_node(Tensor({1}, {total_bits}), {y, mu, sigma},
                     [y, mu, sigma, n, inv_ln2](Node& self) {
                         const double gout = self.grad[0];
                         for (std::size_t i = 0; i < n; ++i) {
                             const double s = sigma->value[i];
                             const double d = y->value[i] - mu->value[i];
                             const double up = (d + 0.5) / s;
                             const double lo = (d - 0.5) / s;
                             const double p = normal_cdf(up) - normal_cdf(lo);
                             if (p < likelihood_floor) continue;  // mass floored; gate gradient
                             const double dbits_dp = -inv_ln2 / p;
                             const double pu = normal_pdf(up), pl = normal_pdf(lo);
                             const double dp_dd = (pu - pl) / s;
                             const double dp_ds = (pl * lo - pu * up) / s;
                             const double g = gout * dbits_dp;
                             if (y->requires_grad) ensure_grad(*y)[i] += g * dp_dd;
                             if (mu->requires_grad) ensure_grad(*mu)[i] += -g * dp_dd;
                             if (sigma->requires_grad) ensure_grad(*sigma)[i] += g * dp_ds;
                         }
                     });
}

}  // namespace pcic::ag
