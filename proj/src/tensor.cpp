#include "pcic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pcic {

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + Tensor::shape_str(a.shape()) +
                         " vs " + Tensor::shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor clamp01(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = std::clamp(a[i], 0.0, 1.0);
    return out;
}

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.numel() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& a) {
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

Tensor pad_to_multiple_reflect(const Tensor& x, int multiple) {
    if (x.ndim() != 3) throw ShapeError("pad_to_multiple_reflect expects {C,H,W}");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ph = (multiple - h % multiple) % multiple;
    const int pw = (multiple - w % multiple) % multiple;
    if (ph == 0 && pw == 0) return x;
    if (ph >= h || pw >= w)
        throw ShapeError("pad_to_multiple_reflect: input too small to mirror-pad");
    Tensor out({c, h + ph, w + pw});
    auto mirror = [](int i, int n) { return i < n ? i : 2 * n - 1 - i; };
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h + ph; ++i)
            for (int j = 0; j < w + pw; ++j)
                out.at(ci, i, j) = x.at(ci, mirror(i, h), mirror(j, w));
    return out;
}

Tensor crop_top_left(const Tensor& x, int h, int w) {
    if (x.ndim() != 3) throw ShapeError("crop_top_left expects {C,H,W}");
    if (h > x.dim(1) || w > x.dim(2)) throw ShapeError("crop_top_left: region exceeds input");
    Tensor out({x.dim(0), h, w});
    for (int c = 0; c < x.dim(0); ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out.at(c, i, j) = x.at(c, i, j);
    return out;
}

}  // namespace pcic
